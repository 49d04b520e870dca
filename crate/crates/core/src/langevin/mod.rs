//! Stochastic trajectories of the dual Fokker-Planck equation and the
//! deterministic flow behind it: ensembles, hyperbolic-point cumulants,
//! Lyapunov exponents and unstable manifolds.

mod lyapunov;
mod manifold;

pub use lyapunov::{lyapunov_estimate, LyapunovEstimate, LyapunovSpec};
pub use manifold::{
    period_map, periodic_point, saddle_guess, trace_unstable_manifold, ManifoldPolyline, ManifoldSpec, PeriodicPoint,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::fmt17;
use crate::model::{linearize_hyperbolic, HyperbolicPoint, ModelError, ModelParams};
use crate::states::GaussianSpec;

/// Statistics are flagged below this many surviving trajectories.
pub const MIN_ENSEMBLE: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum LangevinError {
    #[error("invalid {name}: {value}")]
    Invalid { name: &'static str, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("periodic point search did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("periodic point is not hyperbolic (eigenvalues {re} ± {im}i)")]
    NotHyperbolic { re: f64, im: f64 },
    #[error("manifold needs more than {budget} vertices")]
    VertexBudget { budget: usize },
    #[error("every trajectory escaped or blew up")]
    NoSurvivors,
}

fn check(name: &'static str, value: f64, ok: bool) -> Result<(), LangevinError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(LangevinError::Invalid { name, value })
    }
}

/// `(u+, u-)` with `u± = (sqrt(lambda m)(q - q_eq) ± p / sqrt(lambda m)) / sqrt 2`.
pub fn project_stable_unstable(q: f64, p: f64, m: f64, lambda_local: f64, q_eq: f64) -> (f64, f64) {
    let s = (lambda_local * m).sqrt();
    let (x, y) = (s * (q - q_eq), p / s);
    (
        (x + y) * std::f64::consts::FRAC_1_SQRT_2,
        (x - y) * std::f64::consts::FRAC_1_SQRT_2,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Point { q: f64, p: f64 },
    Gaussian(GaussianSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Times at which statistics are taken, rounded to whole steps. `t = 0` is allowed.
    pub sample_times: Vec<f64>,
    pub initial: InitialCondition,
    /// Noise is drawn on a grid `dt / noise_substeps` and summed per step, so a
    /// run at `dt` and a run at `dt / 2` can share one Brownian path.
    pub noise_substeps: usize,
    pub keep_trajectories: bool,
}

impl EnsembleSpec {
    pub fn new(n: usize, dt: f64, t_end: f64, seed: u64) -> Self {
        Self {
            n,
            dt,
            t_end,
            seed,
            sample_times: vec![t_end],
            initial: InitialCondition::Point { q: 0.0, p: 0.0 },
            noise_substeps: 1,
            keep_trajectories: false,
        }
    }
}

/// A value and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleStats {
    pub time: f64,
    pub mean_q: Estimate,
    pub mean_p: Estimate,
    pub var_q: Estimate,
    pub var_p: Estimate,
    pub mean_u_plus: Estimate,
    pub mean_u_minus: Estimate,
    pub var_u_plus: Estimate,
    pub var_u_minus: Estimate,
    pub cov_u: Estimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub samples: Vec<SampleStats>,
    /// Trajectories that contributed.
    pub count: usize,
    /// Trajectories dropped for non-finite values.
    pub aborted: usize,
    pub seed: u64,
    pub hyperbolic: HyperbolicPoint,
    /// `(q, p)` per sample time per trajectory, when requested.
    pub trajectories: Option<Vec<Vec<(f64, f64)>>>,
}

impl EnsembleStats {
    pub const CSV_HEADER: &'static str = "time,mean_q,se_mean_q,mean_p,se_mean_p,var_q,se_var_q,var_p,se_var_p,\
mean_u_plus,se_mean_u_plus,mean_u_minus,se_mean_u_minus,var_u_plus,se_var_u_plus,\
var_u_minus,se_var_u_minus,cov_u,se_cov_u";

    pub fn csv_rows(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| {
                let mut cols = vec![fmt17(s.time)];
                for e in [
                    s.mean_q,
                    s.mean_p,
                    s.var_q,
                    s.var_p,
                    s.mean_u_plus,
                    s.mean_u_minus,
                    s.var_u_plus,
                    s.var_u_minus,
                    s.cov_u,
                ] {
                    cols.push(fmt17(e.value));
                    cols.push(fmt17(e.stderr));
                }
                cols.join(",")
            })
            .collect()
    }
}

/// The RNG for trajectory `index`: one stream per trajectory, so results do
/// not depend on how trajectories are scheduled.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sample_steps(spec: &EnsembleSpec, nsteps: usize) -> Vec<usize> {
    spec.sample_times
        .iter()
        .map(|&t| ((t / spec.dt).round().max(0.0) as usize).min(nsteps))
        .collect()
}

/// One Euler-Maruyama path, returning `(q, p)` at each requested step, or
/// `None` if it went non-finite.
fn run_path(
    params: &ModelParams,
    spec: &EnsembleSpec,
    samples: &[usize],
    nsteps: usize,
    index: u64,
) -> Option<Vec<(f64, f64)>> {
    let mut rng = trajectory_rng(spec.seed, index);
    let (mut q, mut p) = match &spec.initial {
        &InitialCondition::Point { q, p } => (q, p),
        InitialCondition::Gaussian(g) => {
            let zq: f64 = StandardNormal.sample(&mut rng);
            let zp: f64 = StandardNormal.sample(&mut rng);
            (g.q0 + g.sigma_q * zq, g.p0 + g.sigma_p * zp)
        }
    };
    let dt = spec.dt;
    let sub = spec.noise_substeps.max(1);
    let kick = (2.0 * params.diffusion * dt / sub as f64).sqrt();
    let mut out = Vec::with_capacity(samples.len());
    let mut next = 0;
    for s in 0..=nsteps {
        while next < samples.len() && samples[next] == s {
            out.push((q, p));
            next += 1;
        }
        if s == nsteps {
            break;
        }
        let mut dw = 0.0;
        if params.diffusion > 0.0 {
            for _ in 0..sub {
                let z: f64 = StandardNormal.sample(&mut rng);
                dw += z;
            }
        }
        let t = s as f64 * dt;
        let f = params.force(q, t);
        q += p * dt / params.m;
        p += f * dt + kick * dw;
        if !(q.is_finite() && p.is_finite()) {
            return None;
        }
    }
    Some(out)
}

fn mean_est(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

/// Unbiased covariance and its standard error from the spread of the centered
/// products.
fn cov_est(xs: &[f64], ys: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let m = prods.iter().sum::<f64>() / n;
    let spread = prods.iter().map(|z| (z - m).powi(2)).sum::<f64>() / n;
    Estimate {
        value: m * n / (n - 1.0).max(1.0),
        stderr: (spread / n).sqrt(),
    }
}

fn stats_at(time: f64, qs: &[f64], ps: &[f64], hp: &HyperbolicPoint, m: f64) -> SampleStats {
    let (up, um): (Vec<f64>, Vec<f64>) = qs
        .iter()
        .zip(ps)
        .map(|(&q, &p)| project_stable_unstable(q, p, m, hp.lambda_local, hp.q_eq))
        .unzip();
    SampleStats {
        time,
        mean_q: mean_est(qs),
        mean_p: mean_est(ps),
        var_q: cov_est(qs, qs),
        var_p: cov_est(ps, ps),
        mean_u_plus: mean_est(&up),
        mean_u_minus: mean_est(&um),
        var_u_plus: cov_est(&up, &up),
        var_u_minus: cov_est(&um, &um),
        cov_u: cov_est(&up, &um),
    }
}

/// Euler-Maruyama ensemble `dq = p dt / m`, `dp = f(q, t) dt + sqrt(2 D dt) N(0, 1)`.
/// Trajectories run in parallel; the reduction is in trajectory order.
pub fn simulate_ensemble(params: &ModelParams, spec: &EnsembleSpec) -> Result<EnsembleStats, LangevinError> {
    params.validate()?;
    check("n", spec.n as f64, spec.n >= 1)?;
    check("dt", spec.dt, spec.dt > 0.0)?;
    check("t_end", spec.t_end, spec.t_end >= spec.dt)?;
    for &t in &spec.sample_times {
        check("sample time", t, t >= 0.0 && t <= spec.t_end * (1.0 + 1e-12))?;
    }
    let hp = linearize_hyperbolic(params).unwrap_or(HyperbolicPoint {
        q_eq: 0.0,
        lambda_local: 1.0,
    });
    let nsteps = (spec.t_end / spec.dt).round() as usize;
    let steps = sample_steps(spec, nsteps);
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let sorted: Vec<usize> = order.iter().map(|&i| steps[i]).collect();

    let paths: Vec<Option<Vec<(f64, f64)>>> = (0..spec.n as u64)
        .into_par_iter()
        .map(|i| run_path(params, spec, &sorted, nsteps, i))
        .collect();
    let aborted = paths.iter().filter(|p| p.is_none()).count();
    let kept: Vec<Vec<(f64, f64)>> = paths.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(LangevinError::NoSurvivors);
    }
    // undo the sort so samples follow the requested order
    let mut slot = vec![0; steps.len()];
    for (k, &i) in order.iter().enumerate() {
        slot[i] = k;
    }
    let samples = (0..steps.len())
        .map(|i| {
            let (qs, ps): (Vec<f64>, Vec<f64>) = kept.iter().map(|path| path[slot[i]]).unzip();
            stats_at(steps[i] as f64 * spec.dt, &qs, &ps, &hp, params.m)
        })
        .collect();
    let trajectories = spec.keep_trajectories.then(|| {
        kept.iter()
            .map(|path| slot.iter().map(|&k| path[k]).collect())
            .collect()
    });
    Ok(EnsembleStats {
        samples,
        count: kept.len(),
        aborted,
        seed: spec.seed,
        hyperbolic: hp,
        trajectories,
    })
}

/// Analytic cumulants of `u±` about a hyperbolic point of the linear flow,
/// started from a sharp point: `(Var u+, Var u-, Cov)`.
pub fn analytic_cumulants(t: f64, lambda: f64, m: f64, d: f64) -> (f64, f64, f64) {
    let c = d / (2.0 * m * lambda * lambda);
    (
        c * ((2.0 * lambda * t).exp() - 1.0),
        c * (1.0 - (-2.0 * lambda * t).exp()),
        -d * t / (m * lambda),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CumulantRow {
    pub time: f64,
    pub name: &'static str,
    pub value: f64,
    pub target: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CumulantTable {
    pub rows: Vec<CumulantRow>,
    /// Fewer than [`MIN_ENSEMBLE`] trajectories contributed.
    pub insufficient: bool,
}

impl CumulantTable {
    pub fn pass(&self) -> bool {
        !self.insufficient && self.rows.iter().all(|r| r.pass)
    }
}

/// Compares the sampled cumulants of `u±` to the linear-flow laws; a row passes
/// when within `n_sigma` standard errors (at `t = 0` the values must vanish).
pub fn cumulant_check(stats: &EnsembleStats, params: &ModelParams, n_sigma: f64) -> CumulantTable {
    let lam = stats.hyperbolic.lambda_local;
    let mut rows = Vec::new();
    for s in &stats.samples {
        let (vp, vm, c) = analytic_cumulants(s.time, lam, params.m, params.diffusion);
        for (name, est, target) in [
            ("var_u_plus", s.var_u_plus, vp),
            ("var_u_minus", s.var_u_minus, vm),
            ("cov_u", s.cov_u, c),
        ] {
            let dev = (est.value - target).abs();
            let pass = if est.stderr > 0.0 {
                dev <= n_sigma * est.stderr
            } else {
                dev <= 1e-12 * target.abs().max(1e-300) || dev == 0.0
            };
            rows.push(CumulantRow {
                time: s.time,
                name,
                value: est.value,
                target,
                stderr: est.stderr,
                pass,
            });
        }
    }
    CumulantTable {
        rows,
        insufficient: stats.count < MIN_ENSEMBLE,
    }
}

/// One classical RK4 step of `(q, p)` from `t` over `h`.
pub(crate) fn rk4(params: &ModelParams, q: f64, p: f64, t: f64, h: f64) -> (f64, f64) {
    let m = params.m;
    let f = |q: f64, t: f64| params.force(q, t);
    let (k1q, k1p) = (p / m, f(q, t));
    let (k2q, k2p) = ((p + 0.5 * h * k1p) / m, f(q + 0.5 * h * k1q, t + 0.5 * h));
    let (k3q, k3p) = ((p + 0.5 * h * k2p) / m, f(q + 0.5 * h * k2q, t + 0.5 * h));
    let (k4q, k4p) = ((p + h * k3p) / m, f(q + h * k3q, t + h));
    (
        q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}
