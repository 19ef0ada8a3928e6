//! Two-asset market model and its reduction to the one-dimensional ratio process.
//!
//! The exchange option on `(S1, S2)` is re-expressed in units of the second
//! asset, which collapses the problem to a single ratio process
//! `R_t = e^{(q1-q2)t} S1/S2` that is a martingale under the numeraire
//! measure. The bivariate jump measure is tilted by `e^{y2}` along the way
//! and only the law of `z = y1 - y2` survives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("effective diffusion variance is zero (sigma1={0}, sigma2={1}, rho={2})")]
    DegenerateDiffusion(f64, f64, f64),
    #[error("correlation {0} outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error("exchange ratio K must be positive, got {0}")]
    NonPositiveStrike(f64),
    #[error("horizon T must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("volatility must be non-negative, got {0}")]
    NegativeVolatility(f64),
    #[error("dividend yield q1 must be non-negative, got {0}")]
    NegativeDividend(f64),
    #[error("jump intensity must be positive and finite, got {0}")]
    NegativeIntensity(f64),
    #[error("jump covariance matrix is not symmetric positive semidefinite")]
    InvalidCovariance,
    #[error("model field {0} is not finite")]
    NonFinite(&'static str),
}

/// A single point mass of the bivariate jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub y1: f64,
    pub y2: f64,
    pub lambda: f64,
}

/// Finite-activity bivariate jump specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum JumpSpec {
    None,
    Atoms { points: Vec<JumpAtom> },
    Gaussian { lambda: f64, mu: [f64; 2], cov: [[f64; 2]; 2] },
}

impl JumpSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, JumpSpec::None)
    }
}

/// Full market specification for the two-asset exchange option.
///
/// `r` is carried for completeness; the change of numeraire removes it from
/// every price in this engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoAssetModel {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub maturity: f64,
    pub jumps: JumpSpec,
}

impl TwoAssetModel {
    /// Effective diffusion variance of the ratio process,
    /// `sigma^2 = sigma1^2 + sigma2^2 - 2 rho sigma1 sigma2`.
    pub fn effective_variance(&self) -> f64 {
        self.sigma1 * self.sigma1 + self.sigma2 * self.sigma2
            - 2.0 * self.rho * self.sigma1 * self.sigma2
    }

    pub fn validate(&self) -> Result<&Self, ModelError> {
        for (name, v) in [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("rho", self.rho),
            ("q1", self.q1),
            ("q2", self.q2),
            ("r", self.r),
            ("K", self.k),
            ("T", self.maturity),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
        }
        if self.sigma1 < 0.0 {
            return Err(ModelError::NegativeVolatility(self.sigma1));
        }
        if self.sigma2 < 0.0 {
            return Err(ModelError::NegativeVolatility(self.sigma2));
        }
        if self.rho.abs() > 1.0 {
            return Err(ModelError::InvalidCorrelation(self.rho));
        }
        if self.k <= 0.0 {
            return Err(ModelError::NonPositiveStrike(self.k));
        }
        if self.maturity <= 0.0 {
            return Err(ModelError::NonPositiveHorizon(self.maturity));
        }
        if self.q1 < 0.0 {
            return Err(ModelError::NegativeDividend(self.q1));
        }
        if self.effective_variance() <= 0.0 {
            return Err(ModelError::DegenerateDiffusion(
                self.sigma1,
                self.sigma2,
                self.rho,
            ));
        }
        match &self.jumps {
            JumpSpec::None => {}
            JumpSpec::Atoms { points } => {
                for p in points {
                    if !p.lambda.is_finite() || p.lambda <= 0.0 {
                        return Err(ModelError::NegativeIntensity(p.lambda));
                    }
                    if !p.y1.is_finite() || !p.y2.is_finite() {
                        return Err(ModelError::NonFinite("jump atom"));
                    }
                }
            }
            JumpSpec::Gaussian { lambda, mu, cov } => {
                if !lambda.is_finite() || *lambda <= 0.0 {
                    return Err(ModelError::NegativeIntensity(*lambda));
                }
                if mu.iter().any(|v| !v.is_finite())
                    || cov.iter().flatten().any(|v| !v.is_finite())
                {
                    return Err(ModelError::NonFinite("gaussian jump parameters"));
                }
                // symmetry plus PSD of a 2x2: non-negative diagonal and determinant
                if (cov[0][1] - cov[1][0]).abs() > 1e-12 * (1.0 + cov[0][1].abs()) {
                    return Err(ModelError::InvalidCovariance);
                }
                let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
                if cov[0][0] < 0.0 || cov[1][1] < 0.0 || det < -1e-14 {
                    return Err(ModelError::InvalidCovariance);
                }
            }
        }
        Ok(self)
    }
}

/// One-dimensional law of `z = y1 - y2` under the tilted measure
/// `nu~ = e^{y2} nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TiltedJumpLaw {
    None,
    /// `(z_k, lambda~_k)` point masses.
    Atoms(Vec<TiltedAtom>),
    /// Single Gaussian cluster: tilted intensity, mean and variance of `z`.
    GaussianZ { lambda: f64, mean: f64, var: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedAtom {
    pub z: f64,
    pub lambda: f64,
}

impl TiltedJumpLaw {
    /// Total tilted intensity `lambda~ = int nu~(dz)`.
    pub fn total_intensity(&self) -> f64 {
        match self {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => atoms.iter().map(|a| a.lambda).sum(),
            TiltedJumpLaw::GaussianZ { lambda, .. } => *lambda,
        }
    }

    /// `int (e^{c z} - 1) nu~(dz)` for real `c` (finite for all `c` in the
    /// supported variants).
    pub fn exp_integral(&self, c: f64) -> f64 {
        match self {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => {
                atoms.iter().map(|a| a.lambda * ((c * a.z).exp() - 1.0)).sum()
            }
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
                lambda * ((c * mean + 0.5 * c * c * var).exp() - 1.0)
            }
        }
    }

    /// `d/dc int (e^{c z} - 1) nu~(dz) = int z e^{c z} nu~(dz)`.
    pub fn exp_integral_deriv(&self, c: f64) -> f64 {
        match self {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => {
                atoms.iter().map(|a| a.lambda * a.z * (c * a.z).exp()).sum()
            }
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
                lambda * (mean + c * var) * (c * mean + 0.5 * c * c * var).exp()
            }
        }
    }

    /// First moment `int z nu~(dz)`.
    pub fn mean_z(&self) -> f64 {
        self.exp_integral_deriv(0.0)
    }

    /// Second moment `int z^2 nu~(dz)`.
    pub fn second_moment_z(&self) -> f64 {
        match self {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => atoms.iter().map(|a| a.lambda * a.z * a.z).sum(),
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => lambda * (mean * mean + var),
        }
    }

    /// Exponentially weighted second moment `int z^2 e^{c z} nu~(dz)`.
    pub fn second_moment_exp(&self, c: f64) -> f64 {
        match self {
            TiltedJumpLaw::None => 0.0,
            TiltedJumpLaw::Atoms(atoms) => atoms
                .iter()
                .map(|a| a.lambda * a.z * a.z * (c * a.z).exp())
                .sum(),
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
                let m = mean + c * var;
                lambda * (c * mean + 0.5 * c * c * var).exp() * (m * m + var)
            }
        }
    }
}

/// Ratio-process specification under the numeraire measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    /// Effective ratio volatility per sqrt(year).
    pub sigma: f64,
    pub tilted_jumps: TiltedJumpLaw,
    /// Compensator `kappa = int (e^z - 1) nu~(dz)` per year.
    pub kappa: f64,
    pub q1: f64,
    pub q2: f64,
    pub k: f64,
    pub maturity: f64,
}

impl ReducedModel {
    /// Log-moneyness reference level `M = K e^{(q1-q2) T}`.
    pub fn strike_level(&self) -> f64 {
        self.k * ((self.q1 - self.q2) * self.maturity).exp()
    }

    /// Time-`t` exercise level `M_t = K e^{(q1-q2) t}`.
    pub fn strike_level_at(&self, t: f64) -> f64 {
        self.k * ((self.q1 - self.q2) * t).exp()
    }
}

/// Change-of-numeraire reduction: effective volatility, tilted jump law and
/// the martingale compensator.
pub fn reduce(m: &TwoAssetModel) -> Result<ReducedModel, ModelError> {
    m.validate()?;
    let sigma = m.effective_variance().sqrt();
    let tilted_jumps = match &m.jumps {
        JumpSpec::None => TiltedJumpLaw::None,
        JumpSpec::Atoms { points } => TiltedJumpLaw::Atoms(
            points
                .iter()
                .map(|p| TiltedAtom {
                    z: p.y1 - p.y2,
                    lambda: p.lambda * p.y2.exp(),
                })
                .collect(),
        ),
        JumpSpec::Gaussian { lambda, mu, cov } => {
            // Tilting a Gaussian cluster by e^{y2} shifts the mean by the
            // second covariance column and rescales the mass.
            let lambda_t = lambda * (mu[1] + 0.5 * cov[1][1]).exp();
            let mean = (mu[0] + cov[0][1]) - (mu[1] + cov[1][1]);
            let var = cov[0][0] - 2.0 * cov[0][1] + cov[1][1];
            TiltedJumpLaw::GaussianZ {
                lambda: lambda_t,
                mean,
                var: var.max(0.0),
            }
        }
    };
    let kappa = tilted_jumps.exp_integral(1.0);
    Ok(ReducedModel {
        sigma,
        tilted_jumps,
        kappa,
        q1: m.q1,
        q2: m.q2,
        k: m.k,
        maturity: m.maturity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model(jumps: JumpSpec) -> TwoAssetModel {
        TwoAssetModel {
            sigma1: 0.2,
            sigma2: 0.3,
            rho: 0.5,
            q1: 0.05,
            q2: 0.03,
            r: 0.05,
            k: 1.0,
            maturity: 1.0,
            jumps,
        }
    }

    #[test]
    fn effective_variance_matches_hand_value() {
        let m = base_model(JumpSpec::None);
        assert!(m.validate().is_ok());
        assert!((m.effective_variance() - 0.07).abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_equal_vols_are_degenerate() {
        let m = TwoAssetModel {
            sigma1: 0.2,
            sigma2: 0.2,
            rho: 1.0,
            ..base_model(JumpSpec::None)
        };
        assert!(matches!(
            m.validate(),
            Err(ModelError::DegenerateDiffusion(..))
        ));
    }

    #[test]
    fn negative_intensity_is_rejected() {
        let m = base_model(JumpSpec::Atoms {
            points: vec![JumpAtom {
                y1: 0.1,
                y2: 0.0,
                lambda: -0.1,
            }],
        });
        assert!(matches!(m.validate(), Err(ModelError::NegativeIntensity(_))));
    }

    #[test]
    fn correlation_out_of_range_is_rejected() {
        let m = TwoAssetModel {
            rho: 1.5,
            ..base_model(JumpSpec::None)
        };
        assert!(matches!(m.validate(), Err(ModelError::InvalidCorrelation(_))));
    }

    #[test]
    fn atom_tilt_matches_scalar_evaluation() {
        let m = base_model(JumpSpec::Atoms {
            points: vec![JumpAtom {
                y1: 0.1,
                y2: 0.2,
                lambda: 0.5,
            }],
        });
        let rm = reduce(&m).unwrap();
        match &rm.tilted_jumps {
            TiltedJumpLaw::Atoms(atoms) => {
                assert_eq!(atoms.len(), 1);
                assert!((atoms[0].z - (-0.1)).abs() < 1e-15);
                // lambda~ = 0.5 e^{0.2}
                assert!((atoms[0].lambda - 0.5 * 0.2f64.exp()).abs() < 1e-15);
                assert!((atoms[0].lambda - 0.610_701_379_080_085).abs() < 1e-12);
            }
            other => panic!("expected atoms, got {other:?}"),
        }
    }

    #[test]
    fn no_jumps_reduce_to_pure_diffusion() {
        let rm = reduce(&base_model(JumpSpec::None)).unwrap();
        assert_eq!(rm.kappa, 0.0);
        assert_eq!(rm.tilted_jumps, TiltedJumpLaw::None);
        assert!((rm.sigma * rm.sigma - 0.07).abs() < 1e-15);
    }

    #[test]
    fn gaussian_tilt_closed_form() {
        let m = base_model(JumpSpec::Gaussian {
            lambda: 1.0,
            mu: [0.0, 0.0],
            cov: [[0.04, 0.0], [0.0, 0.04]],
        });
        let rm = reduce(&m).unwrap();
        match rm.tilted_jumps {
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
                assert!((lambda - 0.02f64.exp()).abs() < 1e-15);
                assert!((mean - (-0.04)).abs() < 1e-15);
                assert!((var - 0.08).abs() < 1e-15);
            }
            other => panic!("expected gaussian, got {other:?}"),
        }
    }

    /// Oracle: tilted mass, z-mean and z-variance of the Gaussian cluster by
    /// 2-D numerical integration of `e^{y2} nu` over a truncated grid.
    #[test]
    fn gaussian_tilt_matches_grid_integration() {
        let (lambda, mu, cov) = (0.7, [0.05, -0.1], [[0.04, 0.01], [0.01, 0.09]]);
        let m = base_model(JumpSpec::Gaussian {
            lambda,
            mu,
            cov,
        });
        let rm = reduce(&m).unwrap();

        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        let norm = lambda / (2.0 * std::f64::consts::PI * det.sqrt());
        let n = 1400usize;
        let half = 10.0 * cov[0][0].max(cov[1][1]).sqrt();
        let step = 2.0 * half / n as f64;
        let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let y1 = mu[0] - half + (i as f64 + 0.5) * step;
            for j in 0..n {
                let y2 = mu[1] - half + (j as f64 + 0.5) * step;
                let d = [y1 - mu[0], y2 - mu[1]];
                let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
                    + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
                let w = norm * (-0.5 * q).exp() * y2.exp() * step * step;
                let z = y1 - y2;
                mass += w;
                m1 += w * z;
                m2 += w * z * z;
            }
        }
        let (lt, mz, vz) = match rm.tilted_jumps {
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => (lambda, mean, var),
            _ => unreachable!(),
        };
        assert!((mass - lt).abs() < 1e-8, "mass {mass} vs {lt}");
        assert!((m1 / mass - mz).abs() < 1e-8);
        assert!((m2 / mass - (m1 / mass).powi(2) - vz).abs() < 1e-7);
    }

    #[test]
    fn reduce_is_deterministic() {
        let m = base_model(JumpSpec::Atoms {
            points: vec![
                JumpAtom { y1: 0.15, y2: -0.05, lambda: 0.2 },
                JumpAtom { y1: -0.1, y2: 0.1, lambda: 0.3 },
            ],
        });
        let a = reduce(&m).unwrap();
        let b = reduce(&m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_json_round_trip() {
        let text = r#"{"sigma1":0.2,"sigma2":0.3,"rho":0.5,"q1":0.05,"q2":0.03,"r":0.05,
            "K":1.0,"T":1.0,
            "jumps":{"type":"atoms","points":[{"y1":0.1,"y2":0.2,"lambda":0.5}]}}"#;
        let m: TwoAssetModel = serde_json::from_str(text).unwrap();
        assert_eq!(m.k, 1.0);
        let back = serde_json::to_string(&m).unwrap();
        let m2: TwoAssetModel = serde_json::from_str(&back).unwrap();
        assert_eq!(m, m2);
    }
}
