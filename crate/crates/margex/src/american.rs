//! Quadratic-approximation American exchange option engine.
//!
//! The early-exercise premium is approximated in the MacMillan /
//! Barone-Adesi style: substitute `h(t) = 1 - e^{-t}`, drop the residual
//! time-derivative term, and solve the stationary equation with the ansatz
//! `A r^alpha`. `alpha` is the unique negative root of a convex function,
//! and `(A, b(t))` follow from value matching plus smooth pasting against
//! the European put-type value on the ratio.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::charfn::{put_ratio_reduced, PriceError, QuadratureSpec};
use crate::mc::{
    estimate_premium_terms, simulate_ratio_paths, ContinuationValue, MCConfig, McError,
};
use crate::model::{reduce, ModelError, ReducedModel, TiltedJumpLaw, TwoAssetModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmericanError {
    #[error("no sign change found while bracketing the alpha root")]
    BracketNotFound,
    #[error("boundary residual has no root in the bracket (early exercise never optimal)")]
    NoBoundaryRoot,
    #[error("terminal boundary residual has the same sign at both endpoints ({lower}, {upper})")]
    NoRootInInterval { lower: f64, upper: f64 },
    #[error("invalid input: {0}")]
    Domain(&'static str),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Root of the convex exponent equation together with the time substitution
/// values it was solved at.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlphaRoot {
    pub alpha: f64,
    pub residual: f64,
    pub h: f64,
    pub hprime_over_h: f64,
}

/// `f(alpha) = sigma^2/2 alpha^2 - (sigma^2/2 + kappa) alpha
///            + int (e^{alpha z} - 1) nu~(dz) - q1 - h'/h`.
pub fn alpha_objective(rm: &ReducedModel, hprime_over_h: f64, alpha: f64) -> f64 {
    let half_var = 0.5 * rm.sigma * rm.sigma;
    half_var * alpha * alpha - (half_var + rm.kappa) * alpha
        + rm.tilted_jumps.exp_integral(alpha)
        - rm.q1
        - hprime_over_h
}

/// Same root equation assembled in log coordinates, where the generator acts
/// on `e^{alpha x}`: `sigma^2/2 (alpha^2 - alpha)
/// + int (e^{alpha z} - 1 - alpha (e^z - 1)) nu~(dz) - q1 - h'/h`.
pub fn alpha_objective_log(rm: &ReducedModel, hprime_over_h: f64, alpha: f64) -> f64 {
    let half_var = 0.5 * rm.sigma * rm.sigma;
    let jump = rm.tilted_jumps.exp_integral(alpha) - alpha * rm.tilted_jumps.exp_integral(1.0);
    half_var * (alpha * alpha - alpha) + jump - rm.q1 - hprime_over_h
}

fn alpha_objective_deriv(rm: &ReducedModel, alpha: f64) -> f64 {
    let half_var = 0.5 * rm.sigma * rm.sigma;
    2.0 * half_var * alpha - (half_var + rm.kappa) + rm.tilted_jumps.exp_integral_deriv(alpha)
}

/// Unique negative root of the convex exponent equation at time-to-maturity
/// `tau`, with `h(tau) = 1 - e^{-tau}`.
pub fn solve_alpha(rm: &ReducedModel, tau: f64) -> Result<AlphaRoot, AmericanError> {
    if tau <= 0.0 {
        return Err(AmericanError::Domain("tau must be positive"));
    }
    let h = 1.0 - (-tau).exp();
    let hprime_over_h = (-tau).exp() / h;
    let f = |a: f64| alpha_objective(rm, hprime_over_h, a);

    // f(0) = -q1 - h'/h < 0 and f -> +inf as alpha -> -inf, so a doubling
    // bracket always closes for valid inputs
    let mut hi = 0.0;
    let mut lo = -1.0;
    let mut guard = 0;
    while f(lo) <= 0.0 {
        hi = lo;
        lo *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(AmericanError::BracketNotFound);
        }
    }
    for _ in 0..200 {
        if hi - lo < 1e-15 * lo.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut alpha = 0.5 * (lo + hi);
    for _ in 0..8 {
        let fa = f(alpha);
        if fa.abs() < 1e-14 {
            break;
        }
        let d = alpha_objective_deriv(rm, alpha);
        if d == 0.0 {
            break;
        }
        let next = alpha - fa / d;
        if next >= 0.0 || !next.is_finite() {
            break;
        }
        alpha = next;
    }
    Ok(AlphaRoot {
        alpha,
        residual: f(alpha),
        h,
        hprime_over_h,
    })
}

/// Smooth-pasting solution `(b, A)` at calendar time `t`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ApproxSolution {
    pub b: f64,
    pub a_coeff: f64,
    pub alpha_root: AlphaRoot,
    pub value_match_residual: f64,
    pub smooth_paste_residual: f64,
}

/// Solves value matching `u^E(t,b) + h A b^alpha = M_t - b` and smooth
/// pasting `d_r u^E(t,b) + alpha h A b^{alpha-1} = -1` for the critical
/// ratio `b` and coefficient `A`, with `M_t = K e^{(q1-q2)t}`.
///
/// `b` is the root of the scalar residual
/// `g(b) = u^E(t,b) - (b/alpha)(1 + d_r u^E(t,b)) - (M_t - b)`.
pub fn solve_boundary_reduced(
    rm: &ReducedModel,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<ApproxSolution, AmericanError> {
    if rm.q1 <= 0.0 {
        // without a carry on the first asset the put-type problem has no
        // finite exercise boundary in this approximation
        return Err(AmericanError::NoBoundaryRoot);
    }
    if t < 0.0 || t >= rm.maturity {
        return Err(AmericanError::Domain("t must lie in [0, T)"));
    }
    let tau = rm.maturity - t;
    let alpha_root = solve_alpha(rm, tau)?;
    let alpha = alpha_root.alpha;
    let h = alpha_root.h;
    let m_t = rm.strike_level_at(t);

    let g = |b: f64| -> Result<f64, AmericanError> {
        let q = put_ratio_reduced(rm, b, t, quad)?;
        Ok(q.price - (b / alpha) * (1.0 + q.delta_r) - (m_t - b))
    };

    let mut lo = 1e-10 * m_t;
    let mut hi = m_t;
    let g_lo = g(lo)?;
    let g_hi = g(hi)?;
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(AmericanError::NoBoundaryRoot);
    }
    while hi - lo > 1e-12 * m_t {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut b = 0.5 * (lo + hi);
    // two Newton polish steps on a central finite difference
    for _ in 0..2 {
        let gb = g(b)?;
        let step = 1e-7 * b;
        let d = (g(b + step)? - g(b - step)?) / (2.0 * step);
        if d != 0.0 {
            let next = b - gb / d;
            if next > 0.0 && next < m_t {
                b = next;
            }
        }
    }

    let quote = put_ratio_reduced(rm, b, t, quad)?;
    let a_coeff = -(1.0 + quote.delta_r) / (h * alpha * b.powf(alpha - 1.0));
    let value_match_residual = quote.price + h * a_coeff * b.powf(alpha) - (m_t - b);
    let smooth_paste_residual = quote.delta_r + alpha * h * a_coeff * b.powf(alpha - 1.0) + 1.0;
    Ok(ApproxSolution {
        b,
        a_coeff,
        alpha_root,
        value_match_residual,
        smooth_paste_residual,
    })
}

pub fn solve_boundary_at(
    t: f64,
    model: &TwoAssetModel,
    quad: &QuadratureSpec,
) -> Result<ApproxSolution, AmericanError> {
    let rm = reduce(model)?;
    solve_boundary_reduced(&rm, t, quad)
}

/// American quote produced by the quadratic approximation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AmericanQuote {
    /// Physical-space price `C(S1, S2, t, T)`.
    pub price: f64,
    /// Physical-space European put-type value.
    pub european: f64,
    pub solution: Option<ApproxSolution>,
    /// The spot sits in the stopping region; the price is intrinsic.
    pub exercised: bool,
    /// `NoBoundaryRoot` was reported and the European value is returned.
    pub exercise_never_optimal: bool,
}

/// Piecewise American price: intrinsic below the boundary, European plus
/// `h A r^alpha` above it, mapped through `C = S2 e^{(q2-q1)t} u^A(t, r)`.
pub fn american_price(
    s1: f64,
    s2: f64,
    t: f64,
    model: &TwoAssetModel,
    quad: &QuadratureSpec,
) -> Result<AmericanQuote, AmericanError> {
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(AmericanError::Domain("asset prices must be positive"));
    }
    let rm = reduce(model)?;
    let r = ((rm.q1 - rm.q2) * t).exp() * s1 / s2;
    let scale = s2 * ((rm.q2 - rm.q1) * t).exp();
    let m_t = rm.strike_level_at(t);
    let european = scale * put_ratio_reduced(&rm, r, t, quad)?.price;
    match solve_boundary_reduced(&rm, t, quad) {
        Ok(sol) => {
            if r <= sol.b {
                Ok(AmericanQuote {
                    price: scale * (m_t - r),
                    european,
                    solution: Some(sol),
                    exercised: true,
                    exercise_never_optimal: false,
                })
            } else {
                let premium = sol.alpha_root.h * sol.a_coeff * r.powf(sol.alpha_root.alpha);
                Ok(AmericanQuote {
                    price: european + scale * premium,
                    european,
                    solution: Some(sol),
                    exercised: false,
                    exercise_never_optimal: false,
                })
            }
        }
        Err(AmericanError::NoBoundaryRoot) => Ok(AmericanQuote {
            price: european,
            european,
            solution: None,
            exercised: false,
            exercise_never_optimal: true,
        }),
        Err(e) => Err(e),
    }
}

fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn terminal_residual(rm: &ReducedModel, m: f64, s: f64) -> f64 {
    let put_integral = match &rm.tilted_jumps {
        TiltedJumpLaw::None => 0.0,
        TiltedJumpLaw::Atoms(atoms) => atoms
            .iter()
            .map(|a| a.lambda * (m - s * a.z.exp()).max(0.0))
            .sum(),
        TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
            if s == 0.0 {
                lambda * m
            } else if *var <= 0.0 {
                lambda * (m - s * mean.exp()).max(0.0)
            } else {
                let sd = var.sqrt();
                let d = ((m / s).ln() - mean) / sd;
                lambda * (m * normal_cdf(d) - s * (mean + 0.5 * var).exp() * normal_cdf(d - sd))
            }
        }
    };
    put_integral - rm.q1 * (m - s)
}

/// Terminal limit `S0` of the critical ratio: the root in `(0, M]` of
/// `int (M - S0 e^z)^+ nu~(dz) = q1 (M - S0)`.
pub fn terminal_boundary(model: &TwoAssetModel) -> Result<f64, AmericanError> {
    let rm = reduce(model)?;
    terminal_boundary_reduced(&rm)
}

pub fn terminal_boundary_reduced(rm: &ReducedModel) -> Result<f64, AmericanError> {
    let m = rm.strike_level();
    if rm.tilted_jumps == TiltedJumpLaw::None {
        // the balance collapses to q1 (M - S0) = 0
        return Ok(m);
    }
    let res = |s: f64| terminal_residual(rm, m, s);
    let r_lo = res(0.0);
    let r_hi = res(m);
    if r_lo == 0.0 {
        return Ok(0.0);
    }
    if r_hi == 0.0 {
        return Ok(m);
    }
    if r_lo.signum() == r_hi.signum() {
        return Err(AmericanError::NoRootInInterval {
            lower: r_lo,
            upper: r_hi,
        });
    }
    let (mut lo, mut hi) = (0.0, m);
    while hi - lo > 1e-14 * m {
        let mid = 0.5 * (lo + hi);
        if res(mid).signum() == r_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryPoint {
    pub t: f64,
    pub b: Option<f64>,
}

/// Critical-ratio curve on a time grid, with the terminal limit and
/// continuity/monotonicity diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExerciseBoundary {
    pub grid: Vec<BoundaryPoint>,
    pub s0: Option<f64>,
    pub maturity: f64,
    pub max_adjacent_jump: f64,
    pub non_decreasing: bool,
}

impl ExerciseBoundary {
    /// Boundary level at arbitrary times by linear interpolation between
    /// solved grid points and `(T, S0)`. Returns the time of the first
    /// unsolved grid point inside the query range on failure.
    pub fn interpolate_on(&self, times: &[f64]) -> Result<Vec<f64>, f64> {
        let t_min = times.first().copied().unwrap_or(0.0);
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(self.grid.len() + 1);
        for p in &self.grid {
            match p.b {
                Some(b) => knots.push((p.t, b)),
                None => {
                    if p.t >= t_min {
                        return Err(p.t);
                    }
                }
            }
        }
        if let Some(s0) = self.s0 {
            knots.push((self.maturity, s0));
        } else if let Some(&(_, last_b)) = knots.last() {
            knots.push((self.maturity, last_b));
        }
        if knots.is_empty() {
            return Err(t_min);
        }
        Ok(times
            .iter()
            .map(|&s| {
                if s <= knots[0].0 {
                    return knots[0].1;
                }
                if s >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let idx = knots.partition_point(|k| k.0 <= s);
                let (t0, b0) = knots[idx - 1];
                let (t1, b1) = knots[idx];
                if t1 == t0 {
                    b0
                } else {
                    b0 + (b1 - b0) * (s - t0) / (t1 - t0)
                }
            })
            .collect())
    }

    /// `t,b,converged` CSV with a terminal `S0` footer record.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,b,converged\n");
        for p in &self.grid {
            match p.b {
                Some(b) => out.push_str(&format!("{:.16e},{:.16e},true\n", p.t, b)),
                None => out.push_str(&format!("{:.16e},nan,false\n", p.t)),
            }
        }
        match self.s0 {
            Some(s0) => out.push_str(&format!("{:.16e},{:.16e},terminal\n", self.maturity, s0)),
            None => out.push_str(&format!("{:.16e},nan,terminal\n", self.maturity)),
        }
        out
    }
}

fn boundary_diagnostics(values: &[Option<f64>]) -> (f64, bool) {
    let mut max_jump: f64 = 0.0;
    let mut non_decreasing = true;
    let mut prev: Option<f64> = None;
    for v in values.iter().flatten() {
        if let Some(p) = prev {
            max_jump = max_jump.max((v - p).abs());
            if *v < p - 1e-8 {
                non_decreasing = false;
            }
        }
        prev = Some(*v);
    }
    (max_jump, non_decreasing)
}

/// Solves the boundary on a uniform grid over `[0, T - delta]`,
/// `delta = T / (10 n_points)`, and records the terminal limit `S0`.
/// Unsolvable grid points are recorded as gaps, never repaired.
pub fn build_boundary_curve(
    model: &TwoAssetModel,
    n_points: usize,
    quad: &QuadratureSpec,
) -> Result<ExerciseBoundary, AmericanError> {
    if n_points < 2 {
        return Err(AmericanError::Domain("n_points must be at least 2"));
    }
    let rm = reduce(model)?;
    let t_max = rm.maturity - rm.maturity / (10.0 * n_points as f64);
    let grid_times: Vec<f64> = (0..n_points)
        .map(|i| t_max * i as f64 / (n_points - 1) as f64)
        .collect();
    let solved: Vec<Option<f64>> = grid_times
        .par_iter()
        .map(|&t| match solve_boundary_reduced(&rm, t, quad) {
            Ok(sol) => Ok(Some(sol.b)),
            Err(AmericanError::NoBoundaryRoot) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    let s0 = match terminal_boundary_reduced(&rm) {
        Ok(s0) => Some(s0),
        Err(AmericanError::NoRootInInterval { .. }) => None,
        Err(e) => return Err(e),
    };
    let (max_adjacent_jump, non_decreasing) = boundary_diagnostics(&solved);
    Ok(ExerciseBoundary {
        grid: grid_times
            .into_iter()
            .zip(solved)
            .map(|(t, b)| BoundaryPoint { t, b })
            .collect(),
        s0,
        maturity: rm.maturity,
        max_adjacent_jump,
        non_decreasing,
    })
}

struct UeTable {
    ln_lo: f64,
    d_ln: f64,
    values: Vec<f64>,
}

impl UeTable {
    fn eval(&self, r: f64) -> f64 {
        let x = (r.ln() - self.ln_lo) / self.d_ln;
        let n = self.values.len();
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = x.floor() as usize;
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

struct SurfaceSlice {
    m_t: f64,
    b: f64,
    alpha: f64,
    a_coeff: f64,
    h: f64,
    terminal: bool,
    table: Option<UeTable>,
}

/// Approximated continuation-value surface `u^A(s, r)` precomputed on a time
/// grid, with tabulated European values for fast repeated evaluation inside
/// the Monte Carlo premium estimators.
pub struct ApproxSurface {
    slices: Vec<SurfaceSlice>,
}

impl ApproxSurface {
    /// Builds the surface and the matching boundary curve on `times`
    /// (the last grid time must be the maturity).
    pub fn build(
        rm: &ReducedModel,
        times: &[f64],
        quad: &QuadratureSpec,
    ) -> Result<(Self, ExerciseBoundary), AmericanError> {
        let n = times.len();
        if n < 2 || (times[n - 1] - rm.maturity).abs() > 1e-12 {
            return Err(AmericanError::Domain("surface grid must end at maturity"));
        }
        let degenerate = rm.q1 <= 0.0;
        let z_reach = match &rm.tilted_jumps {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => {
                atoms.iter().map(|a| a.z).fold(0.0f64, f64::max)
            }
            TiltedJumpLaw::GaussianZ { mean, var, .. } => mean + 10.5 * (2.0 * var).sqrt(),
        };
        let slices: Vec<SurfaceSlice> = times[..n - 1]
            .par_iter()
            .map(|&t| -> Result<SurfaceSlice, AmericanError> {
                if degenerate {
                    return Ok(SurfaceSlice {
                        m_t: rm.strike_level_at(t),
                        b: 0.0,
                        alpha: -1.0,
                        a_coeff: 0.0,
                        h: 0.0,
                        terminal: false,
                        table: None,
                    });
                }
                let sol = solve_boundary_reduced(rm, t, quad)?;
                let lo = 0.9 * sol.b;
                let hi = sol.b * z_reach.max(0.05).exp() * 1.05;
                let n_tab = 160usize;
                let ln_lo = lo.ln();
                let d_ln = (hi.ln() - ln_lo) / (n_tab - 1) as f64;
                let mut values = Vec::with_capacity(n_tab);
                for j in 0..n_tab {
                    let r = (ln_lo + d_ln * j as f64).exp();
                    values.push(put_ratio_reduced(rm, r, t, quad)?.price);
                }
                Ok(SurfaceSlice {
                    m_t: rm.strike_level_at(t),
                    b: sol.b,
                    alpha: sol.alpha_root.alpha,
                    a_coeff: sol.a_coeff,
                    h: sol.alpha_root.h,
                    terminal: false,
                    table: Some(UeTable { ln_lo, d_ln, values }),
                })
            })
            .collect::<Result<_, _>>()?;
        let s0 = if degenerate {
            None
        } else {
            match terminal_boundary_reduced(rm) {
                Ok(s0) => Some(s0),
                Err(AmericanError::NoRootInInterval { .. }) => None,
                Err(e) => return Err(e),
            }
        };
        let mut all = slices;
        all.push(SurfaceSlice {
            m_t: rm.strike_level(),
            b: s0.unwrap_or(0.0),
            alpha: -1.0,
            a_coeff: 0.0,
            h: 0.0,
            terminal: true,
            table: None,
        });
        let b_values: Vec<Option<f64>> = all[..n - 1]
            .iter()
            .map(|s| if degenerate { Some(0.0) } else { Some(s.b) })
            .collect();
        let (max_adjacent_jump, non_decreasing) = boundary_diagnostics(&b_values);
        let boundary = ExerciseBoundary {
            grid: times[..n - 1]
                .iter()
                .zip(&b_values)
                .map(|(&t, &b)| BoundaryPoint { t, b })
                .collect(),
            s0: if degenerate { Some(0.0) } else { s0 },
            maturity: rm.maturity,
            max_adjacent_jump,
            non_decreasing,
        };
        Ok((ApproxSurface { slices: all }, boundary))
    }
}

impl ContinuationValue for ApproxSurface {
    fn value(&self, step: usize, r: f64) -> f64 {
        let s = &self.slices[step];
        if s.terminal {
            return (s.m_t - r).max(0.0);
        }
        if r <= s.b {
            return s.m_t - r;
        }
        let ue = match &s.table {
            Some(t) => t.eval(r),
            None => 0.0,
        };
        let premium = s.h * s.a_coeff * r.powf(s.alpha);
        (ue + premium).max((s.m_t - r).max(0.0))
    }
}

/// Early-exercise premium decomposition, all terms in currency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PremiumBreakdown {
    pub european: f64,
    pub dividend_term: f64,
    pub dividend_stderr: f64,
    pub jump_term: f64,
    pub jump_stderr: f64,
    pub total_american: f64,
}

/// Monte Carlo evaluation of the premium representation: the European value
/// plus a dividend-carry integral over the stopping region plus a
/// boundary-crossing jump correction.
pub fn premium_decomposition(
    s1: f64,
    s2: f64,
    t: f64,
    model: &TwoAssetModel,
    mc_cfg: &MCConfig,
    quad: &QuadratureSpec,
) -> Result<PremiumBreakdown, AmericanError> {
    if s1 <= 0.0 || s2 <= 0.0 {
        return Err(AmericanError::Domain("asset prices must be positive"));
    }
    let rm = reduce(model)?;
    if t < 0.0 || t >= rm.maturity {
        return Err(AmericanError::Domain("t must lie in [0, T)"));
    }
    let r0 = ((rm.q1 - rm.q2) * t).exp() * s1 / s2;
    let scale = s2 * ((rm.q2 - rm.q1) * t).exp();
    let paths = simulate_ratio_paths(&rm, r0, t, rm.maturity, mc_cfg)?;
    let (surface, boundary) = ApproxSurface::build(&rm, &paths.times, quad)?;
    let terms = estimate_premium_terms(&paths, &boundary, &rm, &surface)?;
    let european = scale * put_ratio_reduced(&rm, r0, t, quad)?.price;
    let dividend_term = scale * terms.dividend;
    let jump_term = scale * terms.jump;
    Ok(PremiumBreakdown {
        european,
        dividend_term,
        dividend_stderr: scale * terms.dividend_stderr,
        jump_term,
        jump_stderr: scale * terms.jump_stderr,
        total_american: european + dividend_term + jump_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpAtom, JumpSpec, TiltedAtom};

    fn diffusion_model() -> TwoAssetModel {
        TwoAssetModel {
            sigma1: 0.2,
            sigma2: 0.3,
            rho: 0.5,
            q1: 0.05,
            q2: 0.03,
            r: 0.05,
            k: 1.0,
            maturity: 1.0,
            jumps: JumpSpec::None,
        }
    }

    #[test]
    fn alpha_matches_quadratic_closed_form() {
        let rm = reduce(&diffusion_model()).unwrap();
        let root = solve_alpha(&rm, 1.0).unwrap();
        let c = 0.05 + root.hprime_over_h;
        let expect = 0.5 * (1.0 - (1.0 + 8.0 * c / 0.07).sqrt());
        assert!((root.hprime_over_h - 0.581_976_706_869_326_5).abs() < 1e-12);
        assert!((root.alpha - expect).abs() < 1e-12);
        assert!((root.alpha - (-3.7786)).abs() < 1e-4);
        assert!(root.residual.abs() < 1e-12);
    }

    #[test]
    fn alpha_objective_is_negative_at_zero() {
        let rm = reduce(&diffusion_model()).unwrap();
        for tau in [0.1f64, 0.5, 2.0] {
            let hph = (-tau).exp() / (1.0 - (-tau).exp());
            assert!(alpha_objective(&rm, hph, 0.0) < 0.0);
        }
    }

    #[test]
    fn alpha_with_jumps_matches_independent_bisection() {
        // single tilted atom (z = -0.2, lambda~ = 0.1), sigma^2 = 0.04
        let mut rm = reduce(&TwoAssetModel {
            sigma1: 0.2,
            sigma2: 0.2,
            rho: 0.5,
            ..diffusion_model()
        })
        .unwrap();
        rm.tilted_jumps = TiltedJumpLaw::Atoms(vec![TiltedAtom { z: -0.2, lambda: 0.1 }]);
        rm.kappa = rm.tilted_jumps.exp_integral(1.0);
        let tau = 0.5;
        let root = solve_alpha(&rm, tau).unwrap();

        // oracle: independent re-statement of f and plain bisection
        let h = 1.0 - (-tau as f64).exp();
        let hph = (-tau as f64).exp() / h;
        let f = |a: f64| {
            0.02 * a * a - (0.02 + 0.1 * ((-0.2f64).exp() - 1.0)) * a
                + 0.1 * ((a * -0.2).exp() - 1.0)
                - 0.05
                - hph
        };
        let (mut lo, mut hi) = (-50.0, 0.0);
        assert!(f(lo) > 0.0 && f(hi) < 0.0);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((root.alpha - 0.5 * (lo + hi)).abs() < 1e-12);
        assert!(root.alpha < 0.0);
    }

    #[test]
    fn alpha_formulations_agree() {
        let m = TwoAssetModel {
            jumps: JumpSpec::Atoms {
                points: vec![
                    JumpAtom { y1: 0.15, y2: -0.05, lambda: 0.2 },
                    JumpAtom { y1: -0.1, y2: 0.1, lambda: 0.3 },
                ],
            },
            ..diffusion_model()
        };
        let rm = reduce(&m).unwrap();
        let root = solve_alpha(&rm, 0.75).unwrap();
        for a in [-8.0, -3.0, root.alpha, -0.5] {
            let d = alpha_objective(&rm, root.hprime_over_h, a)
                - alpha_objective_log(&rm, root.hprime_over_h, a);
            assert!(d.abs() < 1e-12, "route mismatch {d} at alpha={a}");
        }
    }

    #[test]
    fn alpha_objective_is_convex_on_samples() {
        let m = TwoAssetModel {
            jumps: JumpSpec::Atoms {
                points: vec![JumpAtom { y1: 0.1, y2: -0.1, lambda: 0.4 }],
            },
            ..diffusion_model()
        };
        let rm = reduce(&m).unwrap();
        let hph = 0.6;
        let f = |a: f64| alpha_objective(&rm, hph, a);
        let mut a1 = -20.0;
        while a1 < 5.0 {
            let a2 = a1 + 3.7;
            let mid = 0.5 * (a1 + a2);
            assert!(f(mid) <= 0.5 * (f(a1) + f(a2)) + 1e-12);
            a1 += 1.3;
        }
    }

    #[test]
    fn smooth_pasting_identity_holds() {
        let quad = QuadratureSpec::default();
        let sol = solve_boundary_at(0.0, &diffusion_model(), &quad).unwrap();
        assert!(sol.smooth_paste_residual.abs() < 1e-12);
        assert!(sol.value_match_residual.abs() < 1e-10);
        assert!(sol.b > 0.0 && sol.b < 1.0);
    }

    #[test]
    fn boundary_matches_independent_jump_free_solver() {
        // Oracle: the same value-matching/smooth-pasting system coded
        // directly against the Black-Scholes closed form (strike M_t,
        // rate q2, carry such that the ratio is a martingale), solved by
        // plain bisection without any shared quadrature code.
        let m = diffusion_model();
        let quad = QuadratureSpec::default();
        let sol = solve_boundary_at(0.0, &m, &quad).unwrap();

        let (sigma2, q1, q2, tau) = (0.07f64, 0.05f64, 0.03f64, 1.0f64);
        let sigma = sigma2.sqrt();
        let m_t = 1.0; // K e^{(q1-q2) 0}
        let m_cap = ((q1 - q2) * tau).exp(); // K e^{(q1-q2)T}
        let n = Normal::standard();
        let put = |r: f64| {
            let d1 = ((r / m_cap).ln() + 0.5 * sigma2 * tau) / (sigma * tau.sqrt());
            let d2 = d1 - sigma * tau.sqrt();
            (-q1 * tau).exp() * (m_cap * n.cdf(-d2) - r * n.cdf(-d1))
        };
        let delta = |r: f64| {
            let d1 = ((r / m_cap).ln() + 0.5 * sigma2 * tau) / (sigma * tau.sqrt());
            (-q1 * tau).exp() * (n.cdf(d1) - 1.0)
        };
        let h = 1.0 - (-tau).exp();
        let hph = (-tau).exp() / h;
        let alpha = 0.5 * (1.0 - (1.0 + 8.0 * (q1 + hph) / sigma2).sqrt());
        let g = |b: f64| put(b) - (b / alpha) * (1.0 + delta(b)) - (m_t - b);
        let (mut lo, mut hi) = (1e-6, m_t);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle_b = 0.5 * (lo + hi);
        assert!(
            (sol.b - oracle_b).abs() < 1e-8,
            "b={} oracle={}",
            sol.b,
            oracle_b
        );
    }

    #[test]
    fn zero_dividend_has_no_boundary() {
        let m = TwoAssetModel {
            q1: 0.0,
            ..diffusion_model()
        };
        let quad = QuadratureSpec::default();
        assert!(matches!(
            solve_boundary_at(0.0, &m, &quad),
            Err(AmericanError::NoBoundaryRoot)
        ));
        let q = american_price(100.0, 100.0, 0.0, &m, &quad).unwrap();
        assert!(q.exercise_never_optimal);
        assert!((q.price - q.european).abs() < 1e-14);
    }

    #[test]
    fn stopping_region_price_is_intrinsic() {
        let m = diffusion_model();
        let quad = QuadratureSpec::default();
        let sol = solve_boundary_at(0.0, &m, &quad).unwrap();
        let s2 = 100.0;
        let s1 = s2 * sol.b * 0.5;
        let q = american_price(s1, s2, 0.0, &m, &quad).unwrap();
        assert!(q.exercised);
        let intrinsic = s2 * (1.0 - sol.b * 0.5);
        assert!((q.price - intrinsic).abs() < 1e-12);
    }

    #[test]
    fn far_out_american_tends_to_european() {
        let m = diffusion_model();
        let quad = QuadratureSpec::default();
        let q = american_price(5000.0, 100.0, 0.0, &m, &quad).unwrap();
        assert!(q.price >= q.european);
        assert!(q.price - q.european < 1e-6);
    }

    #[test]
    fn terminal_boundary_jump_free_is_strike_level() {
        let m = diffusion_model();
        let s0 = terminal_boundary(&m).unwrap();
        assert_eq!(s0, (0.02f64).exp()); // K e^{(q1-q2)T}
    }

    #[test]
    fn terminal_boundary_single_atom_closed_form() {
        // z = -0.2, lambda~ = 0.02, q1 = 0.05, M = 1
        let mut rm = reduce(&TwoAssetModel {
            q2: 0.05,
            ..diffusion_model()
        })
        .unwrap(); // q1 = q2 -> M = K = 1
        rm.tilted_jumps = TiltedJumpLaw::Atoms(vec![TiltedAtom { z: -0.2, lambda: 0.02 }]);
        rm.kappa = rm.tilted_jumps.exp_integral(1.0);
        let s0 = terminal_boundary_reduced(&rm).unwrap();
        let closed = (0.02 - 0.05) / (0.02 * (-0.2f64).exp() - 0.05);
        assert!((s0 - closed).abs() < 1e-8);
        assert!((s0 - 0.89218).abs() < 1e-5);
        assert!(terminal_residual(&rm, 1.0, s0).abs() < 1e-12);
    }

    #[test]
    fn terminal_boundary_reports_missing_root() {
        let mut rm = reduce(&TwoAssetModel {
            q2: 0.05,
            ..diffusion_model()
        })
        .unwrap();
        rm.tilted_jumps = TiltedJumpLaw::Atoms(vec![TiltedAtom { z: -0.2, lambda: 0.1 }]);
        rm.kappa = rm.tilted_jumps.exp_integral(1.0);
        match terminal_boundary_reduced(&rm) {
            Err(AmericanError::NoRootInInterval { lower, upper }) => {
                assert!(lower > 0.0 && upper > 0.0);
            }
            other => panic!("expected NoRootInInterval, got {other:?}"),
        }
    }

    #[test]
    fn boundary_csv_shape() {
        let quad = QuadratureSpec::default();
        let curve = build_boundary_curve(&diffusion_model(), 8, &quad).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines.len(), 1 + 8 + 1);
        assert_eq!(lines[0], "t,b,converged");
        assert!(lines[9].ends_with("terminal"));
        assert!(curve.grid.iter().all(|p| p.b.unwrap() > 0.0));
    }
}
