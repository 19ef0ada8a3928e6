//! Randomized invariants over the model space.

use proptest::prelude::*;

use margex::*;

fn arb_jumps() -> impl Strategy<Value = JumpSpec> {
    prop_oneof![
        Just(JumpSpec::None),
        prop::collection::vec(
            ((-0.3f64..0.3), (-0.3f64..0.3), (0.01f64..0.6)),
            1..3
        )
        .prop_map(|pts| JumpSpec::Atoms {
            points: pts
                .into_iter()
                .map(|(y1, y2, lambda)| JumpAtom { y1, y2, lambda })
                .collect(),
        }),
        ((0.05f64..0.6), (-0.2f64..0.2), (-0.2f64..0.2), (0.001f64..0.05), (0.001f64..0.05))
            .prop_map(|(lambda, m1, m2, v1, v2)| JumpSpec::Gaussian {
                lambda,
                mu: [m1, m2],
                cov: [[v1, 0.0], [0.0, v2]],
            }),
    ]
}

fn arb_model() -> impl Strategy<Value = TwoAssetModel> {
    (
        (0.05f64..0.5),
        (0.05f64..0.5),
        (-0.9f64..0.9),
        (0.0f64..0.1),
        (0.0f64..0.1),
        (0.5f64..2.0),
        (0.25f64..2.0),
        arb_jumps(),
    )
        .prop_map(|(sigma1, sigma2, rho, q1, q2, k, maturity, jumps)| TwoAssetModel {
            sigma1,
            sigma2,
            rho,
            q1,
            q2,
            r: 0.05,
            k,
            maturity,
            jumps,
        })
        .prop_filter("effective variance too small", |m| {
            m.effective_variance() > 1e-3
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tilted_intensities_stay_positive(m in arb_model()) {
        let rm = reduce(&m).unwrap();
        let total = rm.tilted_jumps.total_intensity();
        prop_assert!(total >= 0.0 && total.is_finite());
        match &m.jumps {
            JumpSpec::None => prop_assert_eq!(total, 0.0),
            _ => prop_assert!(total > 0.0),
        }
    }

    #[test]
    fn call_respects_the_no_arbitrage_envelope(
        m in arb_model(),
        r in 0.3f64..3.0,
        frac in 0.0f64..0.9,
    ) {
        let quad = QuadratureSpec::default();
        let t = frac * m.maturity;
        let rm = reduce(&m).unwrap();
        let tau = m.maturity - t;
        let disc = (-m.q1 * tau).exp();
        let mcap = rm.strike_level();
        let q = european_call_ratio(r, t, &m, &quad).unwrap();
        prop_assert!(q.price >= disc * (r - mcap).max(0.0) - 1e-10);
        prop_assert!(q.price <= disc * r + 1e-10);
    }

    #[test]
    fn parity_and_monotonicity_hold(
        m in arb_model(),
        r in 0.4f64..2.5,
        frac in 0.0f64..0.9,
    ) {
        let quad = QuadratureSpec::default();
        let t = frac * m.maturity;
        let rm = reduce(&m).unwrap();
        let tau = m.maturity - t;
        let disc = (-m.q1 * tau).exp();
        let mcap = rm.strike_level();

        let call = european_call_ratio(r, t, &m, &quad).unwrap().price;
        let put = european_put_ratio(r, t, &m, &quad).unwrap().price;
        prop_assert!((call - put - disc * (r - mcap)).abs() < 1e-9);

        let call_up = european_call_ratio(r * 1.05, t, &m, &quad).unwrap().price;
        let put_up = european_put_ratio(r * 1.05, t, &m, &quad).unwrap().price;
        prop_assert!(call_up >= call - 1e-10);
        prop_assert!(put_up <= put + 1e-10);
    }

    #[test]
    fn american_dominates_european(
        m in arb_model(),
        r in 0.4f64..2.5,
    ) {
        let quad = QuadratureSpec::default();
        let q = american_price(100.0 * r, 100.0, 0.0, &m, &quad).unwrap();
        prop_assert!(q.price >= q.european - 1e-8);
        let intrinsic = 100.0 * (m.k - r).max(0.0);
        prop_assert!(q.price >= intrinsic - 1e-8);
    }
}
