//! Split-operator stepping of the Wigner master equation and its dual classical
//! Fokker-Planck equation.
//!
//! The generator is split in two parts that are each diagonal in one mixed
//! representation:
//!
//! * stream `-(p/m) d_q`, diagonal in `(k, p)`;
//! * kick plus momentum diffusion, diagonal in `(q, xi)`. Kick and diffusion
//!   commute exactly, so they are applied as one multiplier.
//!
//! One step is the symmetric composition `K(dt/2) S(dt) K(dt/2)`. The drive is
//! evaluated at the midpoint of each half kick, `t + dt/4` and `t + 3dt/4`.
//! Consecutive half kicks of back-to-back steps are fused into one multiply.

mod run;

pub use run::{evolve, evolve_twin, CheckpointSchedule, Observer, Recorder, TwinObserver, TwinRecorder};

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{transpose, AxisFfts, Field, GridError, PhaseSpaceGrid};
use crate::model::{ModelError, ModelParams};

/// Maximum tolerated drift of `∫∫ f` relative to the value at plan creation.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("step size must be finite and > 0, got {0}")]
    BadStep(f64),
    #[error("end time {t1} precedes start time {t0}")]
    BadInterval { t0: f64, t1: f64 },
    #[error("normalization drifted by {drift:e} at t = {time}")]
    NormDrift { time: f64, drift: f64 },
    #[error("non-finite values at t = {time}")]
    NonFinite { time: f64 },
    #[error("quantum mode requires hbar > 0")]
    NoHbar,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("observer failed: {0}")]
    Observer(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Quantum,
    Classical,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Quantum => "quantum",
            Mode::Classical => "classical",
        })
    }
}

/// `exp(-i k p dt / m)`: advances `f(q, p) -> f(q - p dt / m, p)` in `(k, p)`.
#[inline]
pub fn stream_multiplier(k: f64, p: f64, dt: f64, m: f64) -> Complex64 {
    Complex64::from_polar(1.0, -k * p * dt / m)
}

/// Kick factor in `(q, xi)` with the drive frozen at `t_mid`.
///
/// Classical: `exp(i dt xi V'(q))`. Quantum: `exp((i dt / hbar) [V(q + hbar xi / 2) - V(q - hbar xi / 2)])`,
/// the exact Moyal action of a potential on the Wigner function.
#[inline]
pub fn kick_phase(q: f64, xi: f64, t_mid: f64, dt: f64, params: &ModelParams, mode: Mode) -> Complex64 {
    let phase = match mode {
        Mode::Classical => dt * xi * params.d1v(q, t_mid),
        Mode::Quantum => {
            let a = 0.5 * params.hbar * xi;
            dt / params.hbar * (params.potential(q + a, t_mid) - params.potential(q - a, t_mid))
        }
    };
    Complex64::from_polar(1.0, phase)
}

/// `exp(-D xi^2 dt)`: exact solution of `d_t f = D d_p^2 f` in `xi` space.
#[inline]
pub fn diffusion_multiplier(xi: f64, dt: f64, diffusion: f64) -> f64 {
    (-diffusion * xi * xi * dt).exp()
}

/// Cached multipliers and FFT plans for stepping one field with fixed `dt`.
///
/// Stream factors are stored in `(p, k)` order to match the transposed buffer;
/// the static kick-plus-diffusion factor for a half step in `(q, xi)` order. The
/// drive contributes `exp(i dt/2 xi Lambda cos(omega t_mid))`, which depends on
/// `xi` only and is rebuilt for every half kick. Nyquist modes are zeroed: no
/// real-preserving multiplier there composes exactly across steps. Raw-FFT
/// normalization (`1/nq`, `1/np`) is folded into the caches.
pub struct StepPlan {
    grid: Arc<PhaseSpaceGrid>,
    params: ModelParams,
    mode: Mode,
    dt: f64,
    ffts: AxisFfts,
    stream: Vec<Complex64>,
    kick_static: Vec<Complex64>,
    drive_a: Vec<Complex64>,
    drive_b: Vec<Complex64>,
    scratch: Vec<Complex64>,
    reference_norm: Option<f64>,
}

impl StepPlan {
    pub fn new(grid: Arc<PhaseSpaceGrid>, params: &ModelParams, mode: Mode, dt: f64) -> Result<Self, EvolveError> {
        params.validate()?;
        if mode == Mode::Quantum && !(params.hbar > 0.0) {
            return Err(EvolveError::NoHbar);
        }
        let ffts = AxisFfts::new(&grid);
        let n = grid.len();
        let mut plan = Self {
            ffts,
            params: params.clone(),
            mode,
            dt: 0.0,
            stream: Vec::new(),
            kick_static: Vec::new(),
            drive_a: vec![Complex64::new(1.0, 0.0); grid.np],
            drive_b: vec![Complex64::new(1.0, 0.0); grid.np],
            scratch: vec![Complex64::new(0.0, 0.0); n],
            reference_norm: None,
            grid,
        };
        plan.set_dt(dt)?;
        Ok(plan)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    /// Regenerates every cached multiplier for a new step size.
    pub fn set_dt(&mut self, dt: f64) -> Result<(), EvolveError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(EvolveError::BadStep(dt));
        }
        self.dt = dt;
        self.build_stream();
        self.build_kick();
        Ok(())
    }

    /// Re-anchors the normalization drift check to the next field seen.
    pub fn reset_reference(&mut self) {
        self.reference_norm = None;
    }

    fn build_stream(&mut self) {
        let g = &*self.grid;
        let (nq, np) = (g.nq, g.np);
        let (dt, m) = (self.dt, self.params.m);
        let inv = 1.0 / nq as f64;
        let nyq = g.q_nyquist();
        let mut stream = vec![Complex64::new(0.0, 0.0); nq * np];
        stream.par_chunks_mut(nq).enumerate().for_each(|(j, row)| {
            let p = g.p(j);
            for (i, s) in row.iter_mut().enumerate() {
                *s = if i == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    stream_multiplier(g.k[i], p, dt, m) * inv
                };
            }
        });
        self.stream = stream;
    }

    fn build_kick(&mut self) {
        let g = &*self.grid;
        let half = 0.5 * self.dt;
        let undriven = ModelParams {
            drive_amplitude: 0.0,
            ..self.params.clone()
        };
        let inv = 1.0 / g.np as f64;
        let (mode, d) = (self.mode, self.params.diffusion);
        let mut kick = vec![Complex64::new(0.0, 0.0); g.len()];
        kick.par_chunks_mut(g.np).enumerate().for_each(|(i, row)| {
            let q = g.q(i);
            for (l, s) in row.iter_mut().enumerate() {
                let xi = g.xi[l];
                *s = kick_phase(q, xi, 0.0, half, &undriven, mode) * (diffusion_multiplier(xi, half, d) * inv);
            }
        });
        self.kick_static = kick;
    }

    /// Drive phase of a half kick centered at `t_mid`.
    fn fill_drive(&self, out: &mut [Complex64], t_mid: f64) {
        let w = 0.5 * self.dt * self.params.drive_amplitude * (self.params.omega * t_mid).cos();
        for (o, &xi) in out.iter_mut().zip(&self.grid.xi) {
            *o = Complex64::from_polar(1.0, w * xi);
        }
    }

    /// Applies one or two half kicks (centered at `t_a` and optionally `t_b`) to
    /// data in `(q, xi)` order, undoing the raw `p` FFT scaling once per kick.
    fn apply_kicks(&mut self, data: &mut [Complex64], t_a: f64, t_b: Option<f64>) {
        let mut drive_a = std::mem::take(&mut self.drive_a);
        let mut drive_b = std::mem::take(&mut self.drive_b);
        self.fill_drive(&mut drive_a, t_a);
        if let Some(tb) = t_b {
            self.fill_drive(&mut drive_b, tb);
        }
        let np = self.grid.np;
        let nyq = self.grid.p_nyquist();
        let npf = np as f64;
        let kick = &self.kick_static;
        let (da, db) = (&drive_a, &drive_b);
        data.par_chunks_mut(np)
            .zip(kick.par_chunks(np))
            .for_each(|(row, krow)| {
                for (l, (v, k)) in row.iter_mut().zip(krow).enumerate() {
                    let half_a = k * da[l];
                    *v *= match t_b {
                        None => half_a,
                        // each half carries 1/np; keep one of them
                        Some(_) => half_a * (k * db[l]) * npf,
                    };
                }
                row[nyq] = Complex64::new(0.0, 0.0);
            });
        self.drive_a = drive_a;
        self.drive_b = drive_b;
    }

    fn apply_stream(&mut self, data: &mut [Complex64]) {
        let (nq, np) = (self.grid.nq, self.grid.np);
        let scratch = &mut self.scratch;
        transpose(data, scratch, nq, np);
        self.ffts.forward_q_transposed(scratch);
        scratch
            .par_chunks_mut(nq)
            .zip(self.stream.par_chunks(nq))
            .for_each(|(row, srow)| {
                row.iter_mut().zip(srow).for_each(|(v, s)| *v *= s);
            });
        self.ffts.inverse_q_transposed(scratch);
        transpose(scratch, data, np, nq);
    }

    fn check(&mut self, field: &Field) -> Result<(), EvolveError> {
        let norm = field.integral();
        let n = norm.re;
        if !(n.is_finite() && norm.im.is_finite()) {
            return Err(EvolveError::NonFinite { time: field.time });
        }
        match self.reference_norm {
            None => self.reference_norm = Some(n),
            Some(r) => {
                let drift = (n - r).abs();
                if drift > NORM_DRIFT_LIMIT * r.abs().max(1e-300) {
                    return Err(EvolveError::NormDrift {
                        time: field.time,
                        drift,
                    });
                }
            }
        }
        Ok(())
    }

    /// One Strang step from `field.time` to `field.time + dt`.
    pub fn step(&mut self, field: &mut Field) -> Result<(), EvolveError> {
        self.advance(field, 1)
    }

    /// `nsteps` consecutive steps with the inner half kicks fused.
    pub fn advance(&mut self, field: &mut Field, nsteps: usize) -> Result<(), EvolveError> {
        if !Arc::ptr_eq(&field.grid, &self.grid) && *field.grid != *self.grid {
            return Err(GridError::GridMismatch.into());
        }
        if self.reference_norm.is_none() {
            self.check(field)?;
        }
        if nsteps == 0 {
            return Ok(());
        }
        let dt = self.dt;
        let t0 = field.time;
        let data = &mut field.values;
        self.ffts.forward_p(data);
        self.apply_kicks(data, t0 + 0.25 * dt, None);
        for s in 0..nsteps {
            let ts = t0 + s as f64 * dt;
            self.ffts.inverse_p(data);
            self.apply_stream(data);
            self.ffts.forward_p(data);
            if s + 1 == nsteps {
                self.apply_kicks(data, ts + 0.75 * dt, None);
            } else {
                self.apply_kicks(data, ts + 0.75 * dt, Some(ts + 1.25 * dt));
            }
        }
        self.ffts.inverse_p(data);
        field.time = t0 + nsteps as f64 * dt;
        self.check(field)
    }
}

/// `‖one dt step − two dt/2 steps‖_L2`: a computable proxy for the cubic
/// commutator error term of the symmetric splitting.
pub fn estimate_splitting_error(field: &Field, params: &ModelParams, mode: Mode, dt: f64) -> Result<f64, EvolveError> {
    let mut coarse = field.clone();
    let mut fine = field.clone();
    StepPlan::new(field.grid.clone(), params, mode, dt)?.step(&mut coarse)?;
    let mut half = StepPlan::new(field.grid.clone(), params, mode, 0.5 * dt)?;
    half.step(&mut fine)?;
    half.step(&mut fine)?;
    Ok(crate::diagnostics::distance(&coarse, &fine, crate::diagnostics::Norm::L2).expect("same grid"))
}
