use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{check, trajectory_rng, LangevinError};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSpec {
    /// Averaging time after burn-in.
    pub t_total: f64,
    pub burn_in: f64,
    pub n: usize,
    pub seed: u64,
    /// RK4 steps per renormalization interval.
    pub steps_per_interval: usize,
    /// Renormalization interval; the drive period by default.
    pub interval: Option<f64>,
    /// Initial conditions are uniform in `|q - q_c| < q_half`, `|p - p_c| < p_half`.
    pub center: (f64, f64),
    pub q_half: f64,
    pub p_half: f64,
    /// Trajectories leaving `|q|, |p| <= R` are dropped.
    pub escape_radius: Option<f64>,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            t_total: 200.0,
            burn_in: 10.0,
            n: 32,
            seed: 1,
            steps_per_interval: 200,
            interval: None,
            center: (0.0, 0.0),
            q_half: 1.5,
            p_half: 1.0,
            escape_radius: Some(50.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub per_trajectory: Vec<f64>,
    pub escaped: usize,
}

/// Flow plus tangent dynamics `d(dq) = dp / m dt`, `d(dp) = f'(q) dq dt`.
fn rk4_tangent(params: &ModelParams, y: [f64; 4], t: f64, h: f64) -> [f64; 4] {
    let m = params.m;
    let rhs = |y: [f64; 4], t: f64| {
        [
            y[1] / m,
            params.force(y[0], t),
            y[3] / m,
            params.force_gradient(y[0]) * y[2],
        ]
    };
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    let k1 = rhs(y, t);
    let k2 = rhs(add(y, k1, 0.5 * h), t + 0.5 * h);
    let k3 = rhs(add(y, k2, 0.5 * h), t + 0.5 * h);
    let k4 = rhs(add(y, k3, h), t + h);
    let mut out = y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Exponent of one trajectory, or `None` if it escaped.
fn one(params: &ModelParams, spec: &LyapunovSpec, interval: f64, index: u64) -> Option<f64> {
    let mut rng = trajectory_rng(spec.seed, index);
    let q0 = spec.center.0 + rng.random_range(-spec.q_half..=spec.q_half);
    let p0 = spec.center.1 + rng.random_range(-spec.p_half..=spec.p_half);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut y = [q0, p0, angle.cos(), angle.sin()];
    let h = interval / spec.steps_per_interval as f64;
    let burn = (spec.burn_in / interval).round() as usize;
    let count = ((spec.t_total / interval).round() as usize).max(1);
    let mut t = 0.0;
    let mut sum = 0.0;
    for k in 0..burn + count {
        for _ in 0..spec.steps_per_interval {
            y = rk4_tangent(params, y, t, h);
            t += h;
        }
        if let Some(r) = spec.escape_radius {
            if !(y[0].abs() <= r && y[1].abs() <= r) {
                return None;
            }
        }
        let norm = y[2].hypot(y[3]);
        if !(norm.is_finite() && norm > 0.0 && y[0].is_finite() && y[1].is_finite()) {
            return None;
        }
        y[2] /= norm;
        y[3] /= norm;
        if k >= burn {
            sum += norm.ln();
        }
    }
    Some(sum / (count as f64 * interval))
}

/// Largest exponent by tangent-vector renormalization, averaged over `spec.n`
/// random starts.
pub fn lyapunov_estimate(params: &ModelParams, spec: &LyapunovSpec) -> Result<LyapunovEstimate, LangevinError> {
    params.validate()?;
    let interval = spec.interval.unwrap_or_else(|| params.drive_period());
    check("interval", interval, interval > 0.0)?;
    check("t_total", spec.t_total, spec.t_total > 0.0)?;
    check("burn_in", spec.burn_in, spec.burn_in >= 0.0)?;
    check("n", spec.n as f64, spec.n >= 1)?;
    check(
        "steps_per_interval",
        spec.steps_per_interval as f64,
        spec.steps_per_interval >= 1,
    )?;
    let results: Vec<Option<f64>> = (0..spec.n as u64)
        .into_par_iter()
        .map(|i| one(params, spec, interval, i))
        .collect();
    let escaped = results.iter().filter(|r| r.is_none()).count();
    let per: Vec<f64> = results.into_iter().flatten().collect();
    if per.is_empty() {
        return Err(LangevinError::NoSurvivors);
    }
    let n = per.len() as f64;
    let mean = per.iter().sum::<f64>() / n;
    let var = per.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(LyapunovEstimate {
        mean,
        stderr: (var / n).sqrt(),
        per_trajectory: per,
        escaped,
    })
}
