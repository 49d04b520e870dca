//! Driven quartic potential `V(q,t) = B q^4 - A q^2 + Lambda q cos(omega t)` and
//! the parameter record shared by every module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} violates: {rule}")]
    Constraint {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
    #[error("undriven potential has no hyperbolic critical point (A = {a}, B = {b})")]
    NoHyperbolicPoint { a: f64, b: f64 },
}

/// Every physical symbol of the model. Defaults are the chaotic Duffing set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mass.
    pub m: f64,
    /// Reduced Planck constant (action units).
    pub hbar: f64,
    /// Momentum diffusion coefficient, `D = hbar^2 k_meas`.
    pub diffusion: f64,
    /// Measurement strength `k_meas`, when `diffusion` was derived from it.
    pub k_meas: Option<f64>,
    /// Coefficient of `-q^2`.
    pub a_coef: f64,
    /// Coefficient of `q^4`.
    pub b_coef: f64,
    /// Drive amplitude.
    pub drive_amplitude: f64,
    /// Drive angular frequency.
    pub omega: f64,
    /// Time-averaged largest Lyapunov exponent (1/time).
    pub lambda_bar: f64,
    /// Area of the bounded chaotic region (action).
    pub area: f64,
    /// Initial coarse-grained area `u0^2` (action).
    pub u0_sq: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            hbar: 0.1,
            diffusion: 1e-3,
            k_meas: None,
            a_coef: 10.0,
            b_coef: 0.5,
            drive_amplitude: 10.0,
            omega: 6.07,
            lambda_bar: 0.57,
            area: 270.0,
            u0_sq: 0.1,
        }
    }
}

impl ModelParams {
    /// Reference Duffing oscillator with the given `hbar` and `D`, `u0^2 = hbar`.
    pub fn duffing(hbar: f64, diffusion: f64) -> Self {
        Self {
            hbar,
            diffusion,
            u0_sq: hbar,
            ..Self::default()
        }
    }

    /// `V = m w^2 q^2 / 2`, undriven, no quartic term.
    pub fn harmonic(m: f64, w: f64, hbar: f64, diffusion: f64) -> Self {
        Self {
            m,
            hbar,
            diffusion,
            a_coef: -0.5 * m * w * w,
            b_coef: 0.0,
            drive_amplitude: 0.0,
            ..Self::default()
        }
    }

    pub fn free_particle(m: f64, hbar: f64, diffusion: f64) -> Self {
        Self {
            m,
            hbar,
            diffusion,
            a_coef: 0.0,
            b_coef: 0.0,
            drive_amplitude: 0.0,
            ..Self::default()
        }
    }

    /// Sets `D = hbar^2 k_meas` and records `k_meas`.
    pub fn with_measurement_strength(mut self, k_meas: f64) -> Self {
        self.k_meas = Some(k_meas);
        self.diffusion = self.hbar * self.hbar * k_meas;
        self
    }

    pub fn drive_period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            ("m", self.m),
            ("hbar", self.hbar),
            ("diffusion", self.diffusion),
            ("a_coef", self.a_coef),
            ("b_coef", self.b_coef),
            ("drive_amplitude", self.drive_amplitude),
            ("omega", self.omega),
            ("lambda_bar", self.lambda_bar),
            ("area", self.area),
            ("u0_sq", self.u0_sq),
        ];
        for (name, value) in all {
            if !value.is_finite() {
                return Err(ModelError::Constraint {
                    name,
                    value,
                    rule: "must be finite",
                });
            }
        }
        let positive = [("m", self.m), ("omega", self.omega)];
        for (name, value) in positive {
            if value <= 0.0 {
                return Err(ModelError::Constraint {
                    name,
                    value,
                    rule: "must be > 0",
                });
            }
        }
        let non_negative = [
            ("hbar", self.hbar),
            ("diffusion", self.diffusion),
            ("lambda_bar", self.lambda_bar),
            ("area", self.area),
            ("u0_sq", self.u0_sq),
        ];
        for (name, value) in non_negative {
            if value < 0.0 {
                return Err(ModelError::Constraint {
                    name,
                    value,
                    rule: "must be >= 0",
                });
            }
        }
        if let Some(k) = self.k_meas {
            if !(k >= 0.0) {
                return Err(ModelError::Constraint {
                    name: "k_meas",
                    value: k,
                    rule: "must be >= 0",
                });
            }
            let expect = self.hbar * self.hbar * k;
            if (self.diffusion - expect).abs() > 1e-12 * expect.abs().max(1e-300) {
                return Err(ModelError::Constraint {
                    name: "diffusion",
                    value: self.diffusion,
                    rule: "must equal hbar^2 * k_meas",
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn drive(&self, t: f64) -> f64 {
        self.drive_amplitude * (self.omega * t).cos()
    }

    #[inline]
    pub fn potential(&self, q: f64, t: f64) -> f64 {
        let q2 = q * q;
        self.b_coef * q2 * q2 - self.a_coef * q2 + self.drive(t) * q
    }

    /// `-dV/dq`.
    #[inline]
    pub fn force(&self, q: f64, t: f64) -> f64 {
        -4.0 * self.b_coef * q * q * q + 2.0 * self.a_coef * q - self.drive(t)
    }

    /// `dV/dq`.
    #[inline]
    pub fn d1v(&self, q: f64, t: f64) -> f64 {
        -self.force(q, t)
    }

    /// `d^2V/dq^2` (time independent).
    #[inline]
    pub fn d2v(&self, q: f64) -> f64 {
        12.0 * self.b_coef * q * q - 2.0 * self.a_coef
    }

    /// `d^3V/dq^3`. All higher derivatives except the constant fourth vanish, so the
    /// quantum correction series stops at the `hbar^2` term.
    #[inline]
    pub fn d3v(&self, q: f64) -> f64 {
        24.0 * self.b_coef * q
    }

    /// `d(force)/dq`.
    #[inline]
    pub fn force_gradient(&self, q: f64) -> f64 {
        -self.d2v(q)
    }

    pub fn hamiltonian(&self, q: f64, p: f64, t: f64) -> f64 {
        p * p / (2.0 * self.m) + self.potential(q, t)
    }

    pub fn is_quartic(&self) -> bool {
        self.b_coef != 0.0
    }
}

/// Hyperbolic critical point of the undriven potential and its local exponent
/// `lambda = sqrt(f'(q_eq) / m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperbolicPoint {
    pub q_eq: f64,
    pub lambda_local: f64,
}

/// Critical points of `B q^4 - A q^2` are `q = 0` and `q^2 = A / 2B`; the only
/// candidate maximum is `q = 0`, hyperbolic iff `A > 0`.
pub fn linearize_hyperbolic(params: &ModelParams) -> Result<HyperbolicPoint, ModelError> {
    let no_point = ModelError::NoHyperbolicPoint {
        a: params.a_coef,
        b: params.b_coef,
    };
    let mut candidates = vec![0.0];
    if params.b_coef != 0.0 && params.a_coef / params.b_coef > 0.0 {
        let r = (params.a_coef / (2.0 * params.b_coef)).sqrt();
        candidates.extend([r, -r]);
    }
    let q_eq = candidates
        .into_iter()
        .filter(|&q| params.force_gradient(q) > 0.0)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .ok_or(no_point)?;
    Ok(HyperbolicPoint {
        q_eq,
        lambda_local: (params.force_gradient(q_eq) / params.m).sqrt(),
    })
}
