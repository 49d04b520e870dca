//! Initial distributions: a single Gaussian and the Wigner function of an
//! equal-weight superposition of two Gaussian wave packets.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, PhaseSpaceGrid};
use crate::model::ModelParams;

/// Required clearance between a packet's center and the box edge, in stds.
pub const EDGE_CLEARANCE: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("standard deviations must be positive (sigma_q = {0}, sigma_p = {1})")]
    BadWidth(f64, f64),
    #[error("weight must be positive, got {0}")]
    BadWeight(f64),
    #[error("packet at ({q0}, {p0}) is within {EDGE_CLEARANCE} stds of the box edge")]
    OutsideBox { q0: f64, p0: f64 },
    #[error("superposed packets must have equal widths and weights")]
    UnequalPackets,
    #[error("superposition needs minimum-uncertainty packets: sigma_q sigma_p = {product}, hbar/2 = {half_hbar}")]
    NotMinimumUncertainty { product: f64, half_hbar: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub q0: f64,
    pub p0: f64,
    pub sigma_q: f64,
    pub sigma_p: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl GaussianSpec {
    /// Coherent-state packet with `sigma_q = sigma_p = sqrt(hbar / 2)`.
    pub fn coherent(q0: f64, p0: f64, hbar: f64) -> Self {
        let s = (hbar / 2.0).sqrt();
        Self {
            q0,
            p0,
            sigma_q: s,
            sigma_p: s,
            weight: 1.0,
        }
    }

    fn validate(&self, grid: &PhaseSpaceGrid) -> Result<(), StateError> {
        if !(self.sigma_q > 0.0 && self.sigma_p > 0.0) {
            return Err(StateError::BadWidth(self.sigma_q, self.sigma_p));
        }
        if !(self.weight > 0.0) {
            return Err(StateError::BadWeight(self.weight));
        }
        let cq = EDGE_CLEARANCE * self.sigma_q;
        let cp = EDGE_CLEARANCE * self.sigma_p;
        let inside = self.q0 - cq >= grid.q_min
            && self.q0 + cq <= grid.q_max
            && self.p0 - cp >= grid.p_min
            && self.p0 + cp <= grid.p_max;
        if !inside {
            return Err(StateError::OutsideBox {
                q0: self.q0,
                p0: self.p0,
            });
        }
        Ok(())
    }

    /// Normalized Gaussian density at `(q, p)`.
    pub fn density(&self, q: f64, p: f64) -> f64 {
        let x = (q - self.q0) / self.sigma_q;
        let y = (p - self.p0) / self.sigma_p;
        (-0.5 * (x * x + y * y)).exp() / (2.0 * PI * self.sigma_q * self.sigma_p)
    }
}

/// Samples the Gaussian and renormalizes the grid sum to `weight`.
pub fn gaussian_wigner(spec: &GaussianSpec, grid: Arc<PhaseSpaceGrid>) -> Result<Field, StateError> {
    spec.validate(&grid)?;
    let s = spec.clone();
    let mut f = Field::from_fn(grid, move |q, p| s.density(q, p));
    f.normalize();
    if spec.weight != 1.0 {
        f.scale(spec.weight);
    }
    Ok(f)
}

/// Wigner function of `(|a> + |b>)` for two minimum-uncertainty packets with
/// wave functions `psi(x) ~ exp(-(x - q0)^2 / 4 sigma_q^2 + i p0 x / hbar)`:
///
/// ```text
/// W = [G_a + G_b + 2 G_mid cos((q dp - dq (p - p_mid)) / hbar)] / (2 + 2 Re<a|b>)
/// ```
///
/// with `dq = q_a - q_b`, `dp = p_a - p_b` and `G_mid` the packet density centered
/// at the midpoint.
pub fn cat_state_wigner(
    a: &GaussianSpec,
    b: &GaussianSpec,
    grid: Arc<PhaseSpaceGrid>,
    params: &ModelParams,
) -> Result<Field, StateError> {
    a.validate(&grid)?;
    b.validate(&grid)?;
    if a.sigma_q != b.sigma_q || a.sigma_p != b.sigma_p || a.weight != b.weight {
        return Err(StateError::UnequalPackets);
    }
    let hbar = params.hbar;
    let product = a.sigma_q * a.sigma_p;
    if !(hbar > 0.0) || (product - hbar / 2.0).abs() > 1e-9 * hbar {
        return Err(StateError::NotMinimumUncertainty {
            product,
            half_hbar: hbar / 2.0,
        });
    }
    let mid = GaussianSpec {
        q0: 0.5 * (a.q0 + b.q0),
        p0: 0.5 * (a.p0 + b.p0),
        ..a.clone()
    };
    let dq = a.q0 - b.q0;
    let dp = a.p0 - b.p0;
    let overlap = (-(a.sigma_q * dp).powi(2) / (2.0 * hbar * hbar) - dq * dq / (8.0 * a.sigma_q * a.sigma_q)).exp()
        * (mid.q0 * dp / hbar).cos();
    let norm = 2.0 + 2.0 * overlap;
    let (a, b) = (a.clone(), b.clone());
    let mut f = Field::from_fn(grid, move |q, p| {
        let fringe = ((q * dp - dq * (p - mid.p0)) / hbar).cos();
        (a.density(q, p) + b.density(q, p) + 2.0 * mid.density(q, p) * fringe) / norm
    });
    f.normalize();
    Ok(f)
}
