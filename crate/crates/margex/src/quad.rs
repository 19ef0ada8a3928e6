//! Quadrature building blocks: Gauss-Legendre / Gauss-Hermite rules via
//! Golub-Welsch and an adaptive panel-bisection integrator.

use nalgebra::DMatrix;
use once_cell::sync::Lazy;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("adaptive quadrature exhausted the panel budget ({panels} panels used)")]
    NotConverged { panels: usize },
}

/// Nodes and weights of an n-point rule on its natural domain.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix of the
/// orthogonal polynomial recurrence.
fn golub_welsch(diag: &[f64], off: &[f64], weight_mass: f64) -> QuadRule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
    }
    for i in 0..n - 1 {
        j[(i, i + 1)] = off[i];
        j[(i + 1, i)] = off[i];
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], weight_mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> QuadRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 2.0)
}

/// Gauss-Hermite rule for `int e^{-x^2} g(x) dx`.
pub fn gauss_hermite(n: usize) -> QuadRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&diag, &off, std::f64::consts::PI.sqrt())
}

pub static GL15: Lazy<QuadRule> = Lazy::new(|| gauss_legendre(15));
pub static GH64: Lazy<QuadRule> = Lazy::new(|| gauss_hermite(64));

/// Fixed Gauss-Legendre estimate of `int_a^b f`.
pub fn gl_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rule: &QuadRule) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(c + h * x))
        .sum::<f64>()
        * h
}

/// Adaptive panel bisection with a GL15 rule: a panel is accepted when the
/// whole-panel estimate agrees with the sum of its halves to within the
/// panel's share of `abs_tol`. Returns the integral and the number of
/// accepted panels.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<(f64, usize), QuadError> {
    let rule = &*GL15;
    let total_len = b - a;
    if total_len <= 0.0 {
        return Ok((0.0, 0));
    }
    let mut stack = vec![(a, b, gl_panel(f, a, b, rule))];
    let mut sum = 0.0;
    let mut accepted = 0usize;
    let mut processed = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        processed += 1;
        if processed > 4 * max_panels {
            return Err(QuadError::NotConverged { panels: accepted });
        }
        let mid = 0.5 * (lo + hi);
        let left = gl_panel(f, lo, mid, rule);
        let right = gl_panel(f, mid, hi, rule);
        let err = (whole - left - right).abs();
        let share = abs_tol * (hi - lo) / total_len;
        if err <= share.max(1e-300) || hi - lo < 1e-14 * total_len {
            sum += left + right;
            accepted += 2;
            if accepted > max_panels {
                return Err(QuadError::NotConverged { panels: accepted });
            }
        } else {
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    Ok((sum, accepted))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl15_integrates_low_degree_polynomials_exactly() {
        // degree 29 is exact for a 15-point rule; check x^10 on [0, 2]
        let f = |x: f64| x.powi(10);
        let v = gl_panel(&f, 0.0, 2.0, &GL15);
        assert!((v - 2.0f64.powi(11) / 11.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_hermite_matches_gaussian_moments() {
        let rule = &*GH64;
        let mass: f64 = rule.weights.iter().sum();
        assert!((mass - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let m2: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x * x)
            .sum();
        assert!((m2 - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_oscillatory_integrand() {
        // int_0^10 sin(20 x)/ (1+x) dx vs fine fixed reference
        let f = |x: f64| (20.0 * x).sin() / (1.0 + x);
        let (v, _) = integrate_adaptive(&f, 0.0, 10.0, 1e-12, 4096).unwrap();
        let mut reference = 0.0;
        let n = 20000;
        for i in 0..n {
            let a = 10.0 * i as f64 / n as f64;
            let b = 10.0 * (i + 1) as f64 / n as f64;
            reference += gl_panel(&f, a, b, &GL15);
        }
        assert!((v - reference).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let f = |x: f64| (1e5 * x).sin();
        let err = integrate_adaptive(&f, 0.0, 100.0, 1e-13, 16).unwrap_err();
        assert!(matches!(err, QuadError::NotConverged { .. }));
    }
}
