use rayon::prelude::*;
use serde::Serialize;

use super::{check, rk4, LangevinError};
use crate::diagnostics::fmt17;
use crate::grid::PhaseSpaceGrid;
use crate::model::{linearize_hyperbolic, ModelParams};

/// Stroboscopic map: the deterministic flow from `t0` over one drive period.
pub fn period_map(params: &ModelParams, q: f64, p: f64, t0: f64, steps: usize) -> (f64, f64) {
    let h = params.drive_period() / steps as f64;
    let (mut q, mut p) = (q, p);
    for s in 0..steps {
        (q, p) = rk4(params, q, p, t0 + s as f64 * h, h);
    }
    (q, p)
}

fn iterate(params: &ModelParams, q: f64, p: f64, k: usize, steps: usize) -> (f64, f64) {
    let t = params.drive_period();
    let (mut q, mut p) = (q, p);
    for j in 0..k {
        (q, p) = period_map(params, q, p, j as f64 * t, steps);
    }
    (q, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PeriodicPoint {
    pub q: f64,
    pub p: f64,
    pub jacobian: [[f64; 2]; 2],
    /// Eigenvalue with `|mu| > 1`.
    pub mu_unstable: f64,
    pub mu_stable: f64,
    /// Unit eigenvector of `mu_unstable`, oriented with `q >= 0`.
    pub direction: (f64, f64),
    pub residual: f64,
}

fn fd_jacobian(params: &ModelParams, q: f64, p: f64, steps: usize) -> [[f64; 2]; 2] {
    let h = 1e-6;
    let (qa, pa) = period_map(params, q + h, p, 0.0, steps);
    let (qb, pb) = period_map(params, q - h, p, 0.0, steps);
    let (qc, pc) = period_map(params, q, p + h, 0.0, steps);
    let (qd, pd) = period_map(params, q, p - h, 0.0, steps);
    let s = 0.5 / h;
    [[(qa - qb) * s, (qc - qd) * s], [(pa - pb) * s, (pc - pd) * s]]
}

/// Period-one point of the stroboscopic map by Newton iteration with a
/// finite-difference Jacobian, started at `guess`.
pub fn periodic_point(
    params: &ModelParams,
    guess: (f64, f64),
    steps: usize,
    tol: f64,
) -> Result<PeriodicPoint, LangevinError> {
    let (mut q, mut p) = guess;
    let map_residual = |q: f64, p: f64| {
        let (mq, mp) = period_map(params, q, p, 0.0, steps);
        ((mq - q, mp - p), (mq - q).hypot(mp - p))
    };
    let ((mut fq, mut fp), mut residual) = map_residual(q, p);
    for _ in 0..100 {
        if residual < tol || !residual.is_finite() {
            break;
        }
        let j = fd_jacobian(params, q, p, steps);
        let (a, b, c, d) = (j[0][0] - 1.0, j[0][1], j[1][0], j[1][1] - 1.0);
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(LangevinError::NoConvergence { residual });
        }
        let mut sq = -(d * fq - b * fp) / det;
        let mut sp = -(-c * fq + a * fp) / det;
        // cap the step and backtrack until the residual drops
        let len = sq.hypot(sp);
        if len > 0.5 {
            sq *= 0.5 / len;
            sp *= 0.5 / len;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let (f, r) = map_residual(q + sq, p + sp);
            if r.is_finite() && r < residual {
                (q, p, fq, fp, residual) = (q + sq, p + sp, f.0, f.1, r);
                accepted = true;
                break;
            }
            sq *= 0.5;
            sp *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(residual < tol) {
        return Err(LangevinError::NoConvergence { residual });
    }
    let j = fd_jacobian(params, q, p, steps);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc < 0.0 {
        return Err(LangevinError::NotHyperbolic {
            re: 0.5 * tr,
            im: (-disc).sqrt(),
        });
    }
    let (m1, m2) = (0.5 * tr + disc.sqrt(), 0.5 * tr - disc.sqrt());
    let (mu, mus) = if m1.abs() >= m2.abs() { (m1, m2) } else { (m2, m1) };
    if !(mu.abs() > 1.0) {
        return Err(LangevinError::NotHyperbolic { re: mu, im: 0.0 });
    }
    let c1 = (j[0][1], mu - j[0][0]);
    let c2 = (mu - j[1][1], j[1][0]);
    let (mut vq, mut vp) = if c1.0.hypot(c1.1) >= c2.0.hypot(c2.1) { c1 } else { c2 };
    let n = vq.hypot(vp);
    vq /= n;
    vp /= n;
    if vq < 0.0 || (vq == 0.0 && vp < 0.0) {
        vq = -vq;
        vp = -vp;
    }
    Ok(PeriodicPoint {
        q,
        p,
        jacobian: j,
        mu_unstable: mu,
        mu_stable: mus,
        direction: (vq, vp),
        residual,
    })
}

/// Phase-0 point of the linear response to the drive about the undriven saddle:
/// `q_eq + Lambda / (m (omega^2 + lambda^2))`.
pub fn saddle_guess(params: &ModelParams) -> Result<(f64, f64), LangevinError> {
    let hp = linearize_hyperbolic(params)?;
    let lam2 = hp.lambda_local * hp.lambda_local;
    let shift = params.drive_amplitude / (params.m * (params.omega * params.omega + lam2));
    Ok((hp.q_eq + shift, 0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSpec {
    pub t_max: f64,
    /// Largest allowed distance between consecutive vertices.
    pub resolution: f64,
    /// Seed distance from the periodic point; `1e-6 sqrt(area)` by default.
    pub epsilon: Option<f64>,
    pub steps_per_period: usize,
    pub max_vertices: usize,
    pub newton_tol: f64,
    /// Newton start; [`saddle_guess`] by default.
    pub guess: Option<(f64, f64)>,
}

impl ManifoldSpec {
    pub fn new(t_max: f64) -> Self {
        Self {
            t_max,
            resolution: 1e-2,
            epsilon: None,
            steps_per_period: 400,
            max_vertices: 2_000_000,
            newton_tol: 1e-10,
            guess: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPolyline {
    /// Both branches, running from the far end of one through the periodic
    /// point to the far end of the other.
    pub vertices: Vec<(f64, f64)>,
    /// Time since leaving the linear neighbourhood, `T (k + sigma / ln|mu|)`.
    pub arc_time: Vec<f64>,
    pub fixed_point: PeriodicPoint,
    pub resolution: f64,
}

impl ManifoldPolyline {
    pub const CSV_HEADER: &'static str = "q,p,arc_time";

    pub fn csv_rows(&self) -> Vec<String> {
        self.vertices
            .iter()
            .zip(&self.arc_time)
            .map(|(&(q, p), &a)| format!("{},{},{}", fmt17(q), fmt17(p), fmt17(a)))
            .collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .fold(0.0, f64::max)
    }

    /// Row-major mask of the grid cells whose centre lies within `radius` of
    /// the polyline.
    pub fn near_mask(&self, grid: &PhaseSpaceGrid, radius: f64) -> Vec<bool> {
        let mut mask = vec![false; grid.len()];
        let r2 = radius * radius;
        for w in self.vertices.windows(2) {
            let (a, b) = (w[0], w[1]);
            let lo_q = a.0.min(b.0) - radius;
            let hi_q = a.0.max(b.0) + radius;
            let lo_p = a.1.min(b.1) - radius;
            let hi_p = a.1.max(b.1) + radius;
            let i0 = ((lo_q - grid.q_min) / grid.dq).ceil().max(0.0) as usize;
            let i1 = ((hi_q - grid.q_min) / grid.dq).floor();
            let j0 = ((lo_p - grid.p_min) / grid.dp).ceil().max(0.0) as usize;
            let j1 = ((hi_p - grid.p_min) / grid.dp).floor();
            if i1 < 0.0 || j1 < 0.0 {
                continue;
            }
            let i1 = (i1 as usize).min(grid.nq - 1);
            let j1 = (j1 as usize).min(grid.np - 1);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            for i in i0..=i1 {
                let q = grid.q(i);
                for j in j0..=j1 {
                    let p = grid.p(j);
                    let s = if len2 > 0.0 {
                        (((q - a.0) * dx + (p - a.1) * dy) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let (ex, ey) = (q - a.0 - s * dx, p - a.1 - s * dy);
                    if ex * ex + ey * ey <= r2 {
                        mask[i * grid.np + j] = true;
                    }
                }
            }
        }
        mask
    }
}

/// One level of one branch: images after `k` periods of the seed segment
/// `x* + c e^sigma v`, `sigma in [-ln|mu|, 0]`, refined until consecutive
/// images are within `resolution`.
fn trace_level(
    params: &ModelParams,
    fp: &PeriodicPoint,
    sign: f64,
    k: usize,
    eps: f64,
    spec: &ManifoldSpec,
    budget: &mut usize,
) -> Result<Vec<(f64, (f64, f64))>, LangevinError> {
    let lnmu = fp.mu_unstable.abs().ln();
    // orientation-reversing maps swap sides every period
    let side = sign * fp.mu_unstable.signum().powi(k as i32);
    let image = |sigma: f64| {
        let c = side * eps * sigma.exp();
        iterate(
            params,
            fp.q + c * fp.direction.0,
            fp.p + c * fp.direction.1,
            k,
            spec.steps_per_period,
        )
    };
    let init = 17;
    let mut pts: Vec<(f64, (f64, f64))> = (0..init)
        .into_par_iter()
        .map(|i| {
            let s = -lnmu * (1.0 - i as f64 / (init - 1) as f64);
            (s, image(s))
        })
        .collect();
    loop {
        let mids: Vec<f64> = pts
            .windows(2)
            .filter(|w| {
                let (a, b) = (w[0].1, w[1].1);
                (b.0 - a.0).hypot(b.1 - a.1) > spec.resolution && w[1].0 - w[0].0 > 1e-14
            })
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .collect();
        if mids.is_empty() {
            break;
        }
        if pts.len() + mids.len() > *budget {
            return Err(LangevinError::VertexBudget {
                budget: spec.max_vertices,
            });
        }
        let new: Vec<(f64, (f64, f64))> = mids.into_par_iter().map(|s| (s, image(s))).collect();
        pts.extend(new);
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    *budget -= pts.len();
    Ok(pts)
}

/// Unstable manifold of the period-one hyperbolic point of the stroboscopic
/// map (phase 0), grown for `floor(t_max / T)` periods on both branches.
pub fn trace_unstable_manifold(params: &ModelParams, spec: &ManifoldSpec) -> Result<ManifoldPolyline, LangevinError> {
    params.validate()?;
    check("t_max", spec.t_max, spec.t_max >= 0.0)?;
    check("resolution", spec.resolution, spec.resolution > 0.0)?;
    let guess = match spec.guess {
        Some(g) => g,
        None => saddle_guess(params)?,
    };
    let fp = periodic_point(params, guess, spec.steps_per_period, spec.newton_tol)?;
    let eps = spec.epsilon.unwrap_or(1e-6 * params.area.sqrt());
    check("epsilon", eps, eps > 0.0)?;
    let period = params.drive_period();
    let lnmu = fp.mu_unstable.abs().ln();
    let levels = (spec.t_max / period + 1e-9).floor() as usize;
    let mut budget = spec.max_vertices;
    let mut branches = Vec::new();
    for sign in [-1.0, 1.0] {
        let mut verts = Vec::new();
        for k in 0..=levels {
            let pts = trace_level(params, &fp, sign, k, eps, spec, &mut budget)?;
            verts.extend(pts.into_iter().map(|(s, x)| (x, period * (k as f64 + s / lnmu))));
        }
        branches.push(verts);
    }
    let plus = branches.pop().unwrap();
    let mut minus = branches.pop().unwrap();
    minus.reverse();
    let (vertices, arc_time) = minus.into_iter().chain(plus).unzip();
    Ok(ManifoldPolyline {
        vertices,
        arc_time,
        fixed_point: fp,
        resolution: spec.resolution,
    })
}
