//! Report structures serialized by the CLI. Every report carries a
//! bit-for-bit echo of its inputs so a run can be reproduced from its own
//! output.

use serde::{Deserialize, Serialize};

use margex::{
    american_price, premium_decomposition, AmericanError, ApproxSolution, MCConfig, PriceError,
    QuadratureSpec, TwoAssetModel,
};

/// Lossless float formatting for CSV cells (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsEcho {
    pub model: TwoAssetModel,
    pub s1: f64,
    pub s2: f64,
    pub t: f64,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuropeanReport {
    pub inputs: InputsEcho,
    /// Currency price of the exchange option (call-type on the ratio).
    pub european: f64,
    /// Currency price of the reverse exchange (put-type on the ratio).
    pub european_put: f64,
    pub delta_r: f64,
    pub pi1: f64,
    pub pi2: f64,
    pub quad_truncation: f64,
    pub quad_panels: usize,
}

pub fn price_european(
    model: &TwoAssetModel,
    s1: f64,
    s2: f64,
    t: f64,
    quad: &QuadratureSpec,
    inputs: InputsEcho,
) -> Result<EuropeanReport, PriceError> {
    let r = ((model.q1 - model.q2) * t).exp() * s1 / s2;
    let scale = s2 * ((model.q2 - model.q1) * t).exp();
    let call = margex::european_call_ratio(r, t, model, quad)?;
    let put = margex::european_put_ratio(r, t, model, quad)?;
    Ok(EuropeanReport {
        inputs,
        european: scale * call.price,
        european_put: scale * put.price,
        delta_r: put.delta_r,
        pi1: put.pi1,
        pi2: put.pi2,
        quad_truncation: put.truncation,
        quad_panels: put.panels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub b: f64,
    pub alpha: f64,
    pub a_coeff: f64,
    pub s0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmericanReport {
    pub inputs: InputsEcho,
    pub european: f64,
    pub american: f64,
    pub premium: f64,
    pub boundary: Option<BoundarySummary>,
    pub exercised: bool,
    pub exercise_never_optimal: bool,
}

fn summary(sol: &ApproxSolution, s0: Option<f64>) -> BoundarySummary {
    BoundarySummary {
        b: sol.b,
        alpha: sol.alpha_root.alpha,
        a_coeff: sol.a_coeff,
        s0,
    }
}

pub fn price_american(
    model: &TwoAssetModel,
    s1: f64,
    s2: f64,
    t: f64,
    quad: &QuadratureSpec,
    inputs: InputsEcho,
) -> Result<AmericanReport, AmericanError> {
    let quote = american_price(s1, s2, t, model, quad)?;
    let s0 = match margex::terminal_boundary(model) {
        Ok(s0) => Some(s0),
        Err(AmericanError::NoRootInInterval { .. }) => None,
        Err(AmericanError::NoBoundaryRoot) => None,
        Err(e) => return Err(e),
    };
    Ok(AmericanReport {
        inputs,
        european: quote.european,
        american: quote.price,
        premium: quote.price - quote.european,
        boundary: quote.solution.as_ref().map(|s| summary(s, s0)),
        exercised: quote.exercised,
        exercise_never_optimal: quote.exercise_never_optimal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub inputs: InputsEcho,
    pub european: f64,
    pub dividend_term: f64,
    pub dividend_stderr: f64,
    pub jump_term: f64,
    pub jump_stderr: f64,
    pub total_american: f64,
    /// Quadratic-approximation price for cross-reference.
    pub american_approx: f64,
}

pub fn decompose(
    model: &TwoAssetModel,
    s1: f64,
    s2: f64,
    t: f64,
    mc: &MCConfig,
    quad: &QuadratureSpec,
    inputs: InputsEcho,
) -> Result<DecomposeReport, AmericanError> {
    let d = premium_decomposition(s1, s2, t, model, mc, quad)?;
    let am = american_price(s1, s2, t, model, quad)?;
    Ok(DecomposeReport {
        inputs,
        european: d.european,
        dividend_term: d.dividend_term,
        dividend_stderr: d.dividend_stderr,
        jump_term: d.jump_term,
        jump_stderr: d.jump_stderr,
        total_american: d.total_american,
        american_approx: am.price,
    })
}
