//! Monte Carlo oracle for the ratio process: exact-in-law path simulation
//! under the numeraire measure, European estimates, least-squares American
//! estimates, and estimators for the early-exercise premium integrals.
//!
//! RNG contract: counter-based splittable streams. Path `i` consumes the
//! ChaCha stream derived from `(seed, i)`, so parallel and serial runs agree
//! bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::american::ExerciseBoundary;
use crate::model::{ModelError, ReducedModel, TiltedJumpLaw};
use crate::quad::GH64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("jump specification is not finite-activity samplable")]
    UnsupportedJumpLaw,
    #[error("singular continuation regression at step {step}")]
    SingularRegression { step: usize },
    #[error("exercise boundary has unsolved grid points inside the path horizon (t={t})")]
    BoundaryGap { t: f64 },
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MCConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub basis_degree: usize,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig {
            n_paths: 100_000,
            n_steps: 64,
            seed: 0,
            antithetic: true,
            basis_degree: 4,
        }
    }
}

impl MCConfig {
    fn check_paths(&self) -> Result<(), McError> {
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(McError::InvalidConfig(
                "antithetic sampling requires an even path count",
            ));
        }
        if self.n_steps == 0 {
            return Err(McError::InvalidConfig("n_steps must be positive"));
        }
        Ok(())
    }

    fn check_pricing(&self) -> Result<(), McError> {
        self.check_paths()?;
        if self.n_paths < 1000 {
            return Err(McError::InvalidConfig(
                "pricing calls require at least 1000 paths",
            ));
        }
        if self.n_steps < 16 {
            return Err(McError::InvalidConfig("pricing calls require >= 16 steps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Measure {
    Q,
}

/// Simulated ratio paths under the numeraire measure.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// Row-major `n_paths x times.len()` matrix of `X = log R` values.
    pub log_ratio: Vec<f64>,
    /// Per-path `(time, z)` jump events, recorded at the end of the step in
    /// which they occur.
    pub jump_marks: Vec<Vec<(f64, f64)>>,
    pub seed: u64,
    pub antithetic: bool,
    pub measure: Measure,
}

impl PathBatch {
    #[inline]
    pub fn x(&self, path: usize, step: usize) -> f64 {
        self.log_ratio[path * self.times.len() + step]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Debug dump `path_id,t,R`, capped at `max_paths` paths so a fat batch
    /// cannot accidentally produce a multi-gigabyte file.
    pub fn dump_csv(&self, max_paths: usize) -> String {
        let n = self.n_paths.min(max_paths);
        let mut out = String::from("path_id,t,R\n");
        for p in 0..n {
            for (i, &t) in self.times.iter().enumerate() {
                out.push_str(&format!("{p},{:.16e},{:.16e}\n", t, self.x(p, i).exp()));
            }
        }
        out
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

enum JumpSampler {
    None,
    Atoms { cum: Vec<f64>, z: Vec<f64>, total: f64 },
    Gauss { lambda: f64, mean: f64, sd: f64 },
}

impl JumpSampler {
    fn new(law: &TiltedJumpLaw) -> Result<Self, McError> {
        let total = law.total_intensity();
        if !total.is_finite() || total < 0.0 {
            return Err(McError::UnsupportedJumpLaw);
        }
        Ok(match law {
            TiltedJumpLaw::None => JumpSampler::None,
            TiltedJumpLaw::Atoms(atoms) => {
                let mut cum = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.lambda;
                    cum.push(acc);
                }
                JumpSampler::Atoms {
                    cum,
                    z: atoms.iter().map(|a| a.z).collect(),
                    total,
                }
            }
            TiltedJumpLaw::GaussianZ { lambda, mean, var } => JumpSampler::Gauss {
                lambda: *lambda,
                mean: *mean,
                sd: var.sqrt(),
            },
        })
    }

    fn intensity(&self) -> f64 {
        match self {
            JumpSampler::None => 0.0,
            JumpSampler::Atoms { total, .. } => *total,
            JumpSampler::Gauss { lambda, .. } => *lambda,
        }
    }

    fn sample_size(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            JumpSampler::None => 0.0,
            JumpSampler::Atoms { cum, z, total } => {
                let u: f64 = rng.gen::<f64>() * total;
                let idx = cum.partition_point(|&c| c < u).min(z.len() - 1);
                z[idx]
            }
            JumpSampler::Gauss { mean, sd, .. } => {
                let n: f64 = rng.sample(StandardNormal);
                mean + sd * n
            }
        }
    }
}

/// Per-step exact sampling of the log-ratio increment: Gaussian part plus a
/// compound Poisson batch. Returns `(gaussian_part, jump_sum, jumps)`.
fn sample_step(
    rng: &mut ChaCha12Rng,
    sampler: &JumpSampler,
    sigma_sqrt_dt: f64,
    poisson: Option<&Poisson<f64>>,
    jumps: &mut Vec<f64>,
) -> (f64, f64) {
    let g: f64 = rng.sample(StandardNormal);
    jumps.clear();
    let mut jump_sum = 0.0;
    if let Some(p) = poisson {
        let n = rng.sample(*p) as usize;
        for _ in 0..n {
            let z = sampler.sample_size(rng);
            jump_sum += z;
            jumps.push(z);
        }
    }
    (sigma_sqrt_dt * g, jump_sum)
}

/// Simulate `X = log R` on a uniform grid from `t0` to `t_end`.
///
/// Per step `X += (-kappa - sigma^2/2) dt + sigma sqrt(dt) N + sum of jumps`;
/// antithetic pairs share the jump draws and negate the Gaussian draws only.
pub fn simulate_ratio_paths(
    rm: &ReducedModel,
    r0: f64,
    t0: f64,
    t_end: f64,
    cfg: &MCConfig,
) -> Result<PathBatch, McError> {
    cfg.check_paths()?;
    if r0 <= 0.0 {
        return Err(McError::InvalidConfig("r0 must be positive"));
    }
    if t_end <= t0 {
        return Err(McError::InvalidConfig("t_end must exceed t0"));
    }
    let sampler = JumpSampler::new(&rm.tilted_jumps)?;
    let n_steps = cfg.n_steps;
    let n_times = n_steps + 1;
    let dt = (t_end - t0) / n_steps as f64;
    let times: Vec<f64> = (0..n_times).map(|i| t0 + dt * i as f64).collect();
    let drift_dt = (-rm.kappa - 0.5 * rm.sigma * rm.sigma) * dt;
    let sigma_sqrt_dt = rm.sigma * dt.sqrt();
    let rate = sampler.intensity() * dt;
    let poisson = if rate > 0.0 {
        Some(Poisson::new(rate).map_err(|_| McError::UnsupportedJumpLaw)?)
    } else {
        None
    };
    let x0 = r0.ln();

    let per_stream = if cfg.antithetic { 2 } else { 1 };
    let mut log_ratio = vec![0.0f64; cfg.n_paths * n_times];
    let mut jump_marks: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cfg.n_paths];

    log_ratio
        .par_chunks_mut(per_stream * n_times)
        .zip(jump_marks.par_chunks_mut(per_stream))
        .enumerate()
        .for_each(|(stream, (rows, marks))| {
            let mut rng = path_rng(cfg.seed, stream as u64);
            let mut jumps = Vec::new();
            let (a, b) = rows.split_at_mut(n_times);
            a[0] = x0;
            if per_stream == 2 {
                b[0] = x0;
            }
            for step in 0..n_steps {
                let (gauss, jump_sum) =
                    sample_step(&mut rng, &sampler, sigma_sqrt_dt, poisson.as_ref(), &mut jumps);
                a[step + 1] = a[step] + drift_dt + gauss + jump_sum;
                if per_stream == 2 {
                    b[step + 1] = b[step] + drift_dt - gauss + jump_sum;
                }
                for &z in &jumps {
                    marks[0].push((times[step + 1], z));
                    if per_stream == 2 {
                        marks[1].push((times[step + 1], z));
                    }
                }
            }
        });

    Ok(PathBatch {
        times,
        n_paths: cfg.n_paths,
        log_ratio,
        jump_marks,
        seed: cfg.seed,
        antithetic: cfg.antithetic,
        measure: Measure::Q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuropeanMc {
    pub put: f64,
    pub put_stderr: f64,
    pub call: f64,
    pub call_stderr: f64,
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Discounted-payoff Monte Carlo estimate of the European put- and
/// call-type prices on the ratio, without storing full paths.
pub fn mc_european(
    rm: &ReducedModel,
    r0: f64,
    t0: f64,
    cfg: &MCConfig,
) -> Result<EuropeanMc, McError> {
    cfg.check_pricing()?;
    let tau = rm.maturity - t0;
    if tau <= 0.0 {
        return Err(McError::InvalidConfig("t0 must lie before maturity"));
    }
    let sampler = JumpSampler::new(&rm.tilted_jumps)?;
    let n_steps = cfg.n_steps;
    let dt = tau / n_steps as f64;
    let drift_dt = (-rm.kappa - 0.5 * rm.sigma * rm.sigma) * dt;
    let sigma_sqrt_dt = rm.sigma * dt.sqrt();
    let rate = sampler.intensity() * dt;
    let poisson = if rate > 0.0 {
        Some(Poisson::new(rate).map_err(|_| McError::UnsupportedJumpLaw)?)
    } else {
        None
    };
    let m = rm.strike_level();
    let disc = (-rm.q1 * tau).exp();
    let x0 = r0.ln();
    let per_stream = if cfg.antithetic { 2 } else { 1 };
    let n_streams = cfg.n_paths / per_stream;

    // one (put, call) sample per independent stream (pair average when
    // antithetic), so the stderr reflects the actual independence structure
    let samples: Vec<(f64, f64)> = (0..n_streams)
        .into_par_iter()
        .map(|stream| {
            let mut rng = path_rng(cfg.seed, stream as u64);
            let mut jumps = Vec::new();
            let mut xa = x0;
            let mut xb = x0;
            for _ in 0..n_steps {
                let (gauss, jump_sum) =
                    sample_step(&mut rng, &sampler, sigma_sqrt_dt, poisson.as_ref(), &mut jumps);
                xa += drift_dt + gauss + jump_sum;
                xb += drift_dt - gauss + jump_sum;
            }
            let payoff = |x: f64| {
                let r = x.exp();
                (disc * (m - r).max(0.0), disc * (r - m).max(0.0))
            };
            let (pa, ca) = payoff(xa);
            if per_stream == 2 {
                let (pb, cb) = payoff(xb);
                (0.5 * (pa + pb), 0.5 * (ca + cb))
            } else {
                (pa, ca)
            }
        })
        .collect();

    let puts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let calls: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (put, put_stderr) = mean_stderr(&puts);
    let (call, call_stderr) = mean_stderr(&calls);
    Ok(EuropeanMc {
        put,
        put_stderr,
        call,
        call_stderr,
    })
}

/// Least-squares Monte Carlo estimate of the American put-type value on the
/// ratio. The stopping rule is fitted on one path set and evaluated on an
/// independent second set, giving a low-bias estimate with a clean stderr.
pub fn lsmc_american(
    rm: &ReducedModel,
    r0: f64,
    t0: f64,
    cfg: &MCConfig,
) -> Result<(f64, f64), McError> {
    cfg.check_pricing()?;
    let fit_batch = simulate_ratio_paths(rm, r0, t0, rm.maturity, cfg)?;
    let eval_cfg = MCConfig {
        seed: cfg.seed ^ 0x9E37_79B9_7F4A_7C15,
        ..*cfg
    };
    let eval_batch = simulate_ratio_paths(rm, r0, t0, rm.maturity, &eval_cfg)?;

    let times = &fit_batch.times;
    let n_times = times.len();
    let n_paths = fit_batch.n_paths;
    let degree = cfg.basis_degree;
    let strike_at: Vec<f64> = times.iter().map(|&s| rm.strike_level_at(s)).collect();
    let intrinsic = |x: f64, i: usize| (strike_at[i] - x.exp()).max(0.0);

    // backward induction on the fit set
    let mut value: Vec<f64> = (0..n_paths)
        .map(|p| intrinsic(fit_batch.x(p, n_times - 1), n_times - 1))
        .collect();
    let mut coeffs: Vec<Option<Vec<f64>>> = vec![None; n_times];
    for i in (1..n_times - 1).rev() {
        let step_disc = (-rm.q1 * (times[i + 1] - times[i])).exp();
        for v in value.iter_mut() {
            *v *= step_disc;
        }
        let itm: Vec<usize> = (0..n_paths)
            .filter(|&p| intrinsic(fit_batch.x(p, i), i) > 0.0)
            .collect();
        if itm.is_empty() {
            continue;
        }
        let n_itm = itm.len();
        let mut design = DMatrix::<f64>::zeros(n_itm, degree + 1);
        let mut target = DVector::<f64>::zeros(n_itm);
        for (row, &p) in itm.iter().enumerate() {
            let r = fit_batch.x(p, i).exp();
            let mut pow = 1.0;
            for j in 0..=degree {
                design[(row, j)] = pow;
                pow *= r;
            }
            target[row] = value[p];
        }
        // equilibrate the columns so the ridge acts on a unit-scaled
        // system; monomials in r are near-collinear at early steps
        let mut col_norm = vec![0.0f64; degree + 1];
        for j in 0..=degree {
            col_norm[j] = design.column(j).norm();
            if col_norm[j] == 0.0 {
                return Err(McError::SingularRegression { step: i });
            }
            for row in 0..n_itm {
                design[(row, j)] /= col_norm[j];
            }
        }
        let mut normal = design.transpose() * &design;
        for j in 0..=degree {
            normal[(j, j)] += 1e-10;
        }
        let rhs = design.transpose() * target;
        let chol = normal
            .cholesky()
            .ok_or(McError::SingularRegression { step: i })?;
        let mut c = chol.solve(&rhs);
        for j in 0..=degree {
            c[j] /= col_norm[j];
        }
        for &p in &itm {
            let r = fit_batch.x(p, i).exp();
            let mut cont = 0.0;
            let mut pow = 1.0;
            for j in 0..=degree {
                cont += c[j] * pow;
                pow *= r;
            }
            let ex = intrinsic(fit_batch.x(p, i), i);
            if ex >= cont {
                value[p] = ex;
            }
        }
        coeffs[i] = Some(c.iter().copied().collect());
    }

    // evaluate the frozen policy on the independent set
    let per_stream = if cfg.antithetic { 2 } else { 1 };
    let samples: Vec<f64> = (0..n_paths / per_stream)
        .into_par_iter()
        .map(|stream| {
            let mut acc = 0.0;
            for off in 0..per_stream {
                let p = stream * per_stream + off;
                let mut payoff = 0.0;
                let mut stopped = false;
                for i in 1..n_times - 1 {
                    let ex = intrinsic(eval_batch.x(p, i), i);
                    if ex <= 0.0 {
                        continue;
                    }
                    if let Some(c) = &coeffs[i] {
                        let r = eval_batch.x(p, i).exp();
                        let mut cont = 0.0;
                        let mut pow = 1.0;
                        for &cj in c {
                            cont += cj * pow;
                            pow *= r;
                        }
                        if ex >= cont {
                            payoff = (-rm.q1 * (times[i] - t0)).exp() * ex;
                            stopped = true;
                            break;
                        }
                    }
                }
                if !stopped {
                    payoff = (-rm.q1 * (rm.maturity - t0)).exp()
                        * intrinsic(eval_batch.x(p, n_times - 1), n_times - 1);
                }
                acc += payoff;
            }
            acc / per_stream as f64
        })
        .collect();

    Ok(mean_stderr(&samples))
}

/// Continuation value `u^A(s, r)` supplied by the pricing approximation,
/// indexed by the path-grid step.
pub trait ContinuationValue: Sync {
    fn value(&self, step: usize, r: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumTerms {
    pub dividend: f64,
    pub dividend_stderr: f64,
    pub jump: f64,
    pub jump_stderr: f64,
}

/// Time-discretized estimators of the two early-exercise premium integrals
/// (normalized, before the `S2 e^{(q2-q1)t}` physical scale):
///
/// dividend: `q1 E[int_t^T e^{-q1(s-t)} 1_{R_s <= b(s)} (M_s - R_s) ds]`
/// jump:     `E[int_t^T e^{-q1(s-t)} int (u^A(s, R e^z) - (M_s - R e^z))
///            1_{R <= b(s) < R e^z} nu~(dz) ds]`
pub fn estimate_premium_terms(
    paths: &PathBatch,
    boundary: &ExerciseBoundary,
    rm: &ReducedModel,
    u_a: &dyn ContinuationValue,
) -> Result<PremiumTerms, McError> {
    let times = &paths.times;
    let n_times = times.len();
    let t0 = times[0];

    // boundary level on the path grid, linear interpolation between solved
    // grid points and (T, S0); gaps inside the horizon are an error
    let b_grid = boundary.interpolate_on(times).map_err(|t| McError::BoundaryGap { t })?;

    let strike_at: Vec<f64> = times.iter().map(|&s| rm.strike_level_at(s)).collect();
    let disc_at: Vec<f64> = times.iter().map(|&s| (-rm.q1 * (s - t0)).exp()).collect();
    let mut weight = vec![0.0f64; n_times];
    for i in 0..n_times {
        let lo = if i == 0 { times[0] } else { times[i - 1] };
        let hi = if i == n_times - 1 { times[n_times - 1] } else { times[i + 1] };
        weight[i] = 0.5 * (hi - lo);
    }

    enum Inner {
        None,
        Atoms(Vec<(f64, f64)>), // (z, lambda~)
        Gauss { lambda: f64, nodes: Vec<(f64, f64)> }, // (z, normalized weight)
    }
    let inner = match &rm.tilted_jumps {
        TiltedJumpLaw::None => Inner::None,
        TiltedJumpLaw::Atoms(atoms) => {
            Inner::Atoms(atoms.iter().map(|a| (a.z, a.lambda)).collect())
        }
        TiltedJumpLaw::GaussianZ { lambda, mean, var } => {
            let rule = &*GH64;
            let scale = (2.0 * var).sqrt();
            let norm = std::f64::consts::PI.sqrt();
            Inner::Gauss {
                lambda: *lambda,
                nodes: rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| (mean + scale * x, w / norm))
                    .collect(),
            }
        }
    };

    let per_stream = if paths.antithetic { 2 } else { 1 };
    let samples: Vec<(f64, f64)> = (0..paths.n_paths / per_stream)
        .into_par_iter()
        .map(|stream| {
            let mut div_acc = 0.0;
            let mut jump_acc = 0.0;
            for off in 0..per_stream {
                let p = stream * per_stream + off;
                for i in 0..n_times {
                    let r = paths.x(p, i).exp();
                    let b = b_grid[i];
                    if r > b {
                        continue;
                    }
                    let w = weight[i] * disc_at[i];
                    div_acc += w * (strike_at[i] - r);
                    let crossing = |z: f64, lam_w: f64, acc: &mut f64| {
                        let rz = r * z.exp();
                        if rz > b {
                            let cont = u_a.value(i, rz);
                            *acc += w * lam_w * (cont - (strike_at[i] - rz));
                        }
                    };
                    match &inner {
                        Inner::None => {}
                        Inner::Atoms(atoms) => {
                            for &(z, lam) in atoms {
                                crossing(z, lam, &mut jump_acc);
                            }
                        }
                        Inner::Gauss { lambda, nodes } => {
                            for &(z, wgt) in nodes {
                                crossing(z, lambda * wgt, &mut jump_acc);
                            }
                        }
                    }
                }
            }
            let n = per_stream as f64;
            (div_acc / n, jump_acc / n)
        })
        .collect();

    let divs: Vec<f64> = samples.iter().map(|s| s.0 * rm.q1).collect();
    let jumps: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (dividend, dividend_stderr) = mean_stderr(&divs);
    let (jump, jump_stderr) = mean_stderr(&jumps);
    Ok(PremiumTerms {
        dividend,
        dividend_stderr,
        jump,
        jump_stderr,
    })
}
