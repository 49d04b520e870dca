//! Smoothing, filtering and folding scales and the two characteristic times.
//!
//! `l_cl(t) = sqrt(D t / (m lambda))` is the transverse width over which momentum
//! diffusion has smoothed the distribution, `l_q(t) = hbar sqrt(m lambda / (D t))`
//! the filter wavelength `hbar / sqrt(D t)` in phase-space units, and
//! `delta(t) = (A / u0) exp(-lambda t)` the spacing of neighbouring folds.

use serde::Serialize;
use thiserror::Error;

use crate::model::ModelParams;

#[derive(Debug, Error, PartialEq)]
pub enum TimescaleError {
    #[error("{name} must be finite and > 0, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("l_q diverges at t = 0")]
    ZeroTime,
    #[error("no root of l_cl(t) = delta(t) in (0, {upper})")]
    NoBracket { upper: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<(), TimescaleError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(TimescaleError::NotPositive { name, value })
    }
}

pub fn l_classical(t: f64, params: &ModelParams) -> f64 {
    (params.diffusion * t.max(0.0) / (params.m * params.lambda_bar)).sqrt()
}

pub fn l_quantum(t: f64, params: &ModelParams) -> Result<f64, TimescaleError> {
    if t <= 0.0 {
        return Err(TimescaleError::ZeroTime);
    }
    positive("D", params.diffusion)?;
    Ok(params.hbar * (params.m * params.lambda_bar / (params.diffusion * t)).sqrt())
}

/// `(area / sqrt(u0_sq)) exp(-lambda t)`. Only meaningful once the curve has
/// started to fold; see [`folding_onset`].
pub fn fold_spacing(t: f64, params: &ModelParams) -> f64 {
    params.area / params.u0_sq.sqrt() * (-params.lambda_bar * t).exp()
}

/// `ln(area / u0_sq) / (2 lambda)`: earlier than this, `fold_spacing` is not valid.
pub fn folding_onset(params: &ModelParams) -> f64 {
    (params.area / params.u0_sq).ln() / (2.0 * params.lambda_bar)
}

pub fn t_qc(params: &ModelParams) -> Result<f64, TimescaleError> {
    positive("D", params.diffusion)?;
    positive("hbar", params.hbar)?;
    Ok(params.m * params.hbar * params.lambda_bar / params.diffusion)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TStar {
    pub exact: f64,
    pub approx: f64,
    pub x0: f64,
}

/// Root of `l_cl(t) = delta(t)` by bisection, plus the closed-form iterate
/// `(x0 / 2 lambda)(1 - ln x0 / (1 + x0))`, `x0 = ln(2 m lambda^2 A^2 / (D u0_sq))`.
pub fn t_star(params: &ModelParams) -> Result<TStar, TimescaleError> {
    positive("D", params.diffusion)?;
    positive("u0_sq", params.u0_sq)?;
    positive("area", params.area)?;
    positive("lambda_bar", params.lambda_bar)?;
    positive("m", params.m)?;
    let lam = params.lambda_bar;
    let gap = |t: f64| l_classical(t, params) - fold_spacing(t, params);
    let upper = 1e4 / lam;
    // gap is increasing; it starts negative
    let (mut lo, mut hi) = (0.0, upper);
    if !(gap(lo) < 0.0 && gap(hi) > 0.0) {
        return Err(TimescaleError::NoBracket { upper });
    }
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let exact = 0.5 * (lo + hi);
    let x0 = (2.0 * params.m * lam * lam * params.area * params.area / (params.diffusion * params.u0_sq)).ln();
    let approx = x0 / (2.0 * lam) * (1.0 - x0.ln() / (1.0 + x0));
    Ok(TStar { exact, approx, x0 })
}

/// Which of the two characteristic times comes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Diffusion smooths folds before interference is filtered: t* < t_qc.
    StructureFirst,
    /// t_qc <= t*.
    TransitionFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimescaleReport {
    pub t_star_exact: f64,
    pub t_star_approx: f64,
    pub x0: f64,
    pub t_qc: f64,
    pub folding_onset: f64,
    pub regime: Regime,
    #[serde(skip)]
    params: ModelParams,
}

impl TimescaleReport {
    pub fn new(params: &ModelParams) -> Result<Self, TimescaleError> {
        let ts = t_star(params)?;
        let tqc = t_qc(params)?;
        Ok(Self {
            t_star_exact: ts.exact,
            t_star_approx: ts.approx,
            x0: ts.x0,
            t_qc: tqc,
            folding_onset: folding_onset(params),
            regime: if ts.exact < tqc {
                Regime::StructureFirst
            } else {
                Regime::TransitionFirst
            },
            params: params.clone(),
        })
    }

    pub fn l_cl(&self, t: f64) -> f64 {
        l_classical(t, &self.params)
    }

    pub fn l_q(&self, t: f64) -> Result<f64, TimescaleError> {
        l_quantum(t, &self.params)
    }

    pub fn delta(&self, t: f64) -> f64 {
        fold_spacing(t, &self.params)
    }

    /// True when `delta(t)` is being asked for before the folding onset.
    pub fn pre_folding(&self, t: f64) -> bool {
        t < self.folding_onset
    }

    pub const CSV_HEADER: &'static str = "t_star_exact,t_star_approx,x0,t_qc,folding_onset,regime";

    pub fn csv_row(&self) -> String {
        use crate::diagnostics::fmt17;
        format!(
            "{},{},{},{},{},{}",
            fmt17(self.t_star_exact),
            fmt17(self.t_star_approx),
            fmt17(self.x0),
            fmt17(self.t_qc),
            fmt17(self.folding_onset),
            match self.regime {
                Regime::StructureFirst => "structure_first",
                Regime::TransitionFirst => "transition_first",
            }
        )
    }
}

impl std::fmt::Display for TimescaleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "t* (exact)      {:>14.6}", self.t_star_exact)?;
        writeln!(f, "t* (iterate)    {:>14.6}", self.t_star_approx)?;
        writeln!(f, "x0              {:>14.6}", self.x0)?;
        writeln!(f, "t_qc            {:>14.6}", self.t_qc)?;
        writeln!(f, "folding onset   {:>14.6}", self.folding_onset)?;
        write!(
            f,
            "regime          {:>14}",
            match self.regime {
                Regime::StructureFirst => "t* < t_qc",
                Regime::TransitionFirst => "t_qc <= t*",
            }
        )
    }
}
