//! Phase-space discretization, field storage and the per-axis spectral transforms.
//!
//! Samples are stored row-major over `(q, p)`: the value at `(i, j)` lives at
//! `i * np + j` and corresponds to `(q_min + i*dq, p_min + j*dp)`. The box is
//! periodic; the upper bound of each axis is not sampled.
//!
//! Transform convention, per axis (shown for `p`):
//!
//! ```text
//! g(q, xi_l) = sum_j f(q, p_j) exp(-i p_j xi_l) dp
//! f(q, p_j)  = (1 / 2pi) sum_l g(q, xi_l) exp(+i p_j xi_l) dxi
//! ```
//!
//! so the forward transform carries the `dp` measure and the inverse carries
//! `dxi / 2pi`. Every multiplier operator in [`crate::evolve`] assumes this.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Smallest accepted axis length.
pub const MIN_AXIS_LEN: usize = 16;

const TILE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("axis length {0} is not a power of two >= {MIN_AXIS_LEN}")]
    BadSize(usize),
    #[error("bounds [{0}, {1}] are not finite with max > min")]
    BadBounds(f64, f64),
    #[error("field has {got} samples, grid expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Uniform periodic discretization of the rectangle `[q_min, q_max) x [p_min, p_max)`
/// together with the DFT-ordered frequency ladders conjugate to each axis.
#[derive(Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    pub nq: usize,
    pub np: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub dq: f64,
    pub dp: f64,
    /// Wavenumbers conjugate to `q`, in DFT order.
    pub k: Vec<f64>,
    /// Frequencies conjugate to `p`, in DFT order.
    pub xi: Vec<f64>,
}

impl fmt::Debug for PhaseSpaceGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseSpaceGrid")
            .field("nq", &self.nq)
            .field("np", &self.np)
            .field("q", &(self.q_min, self.q_max))
            .field("p", &(self.p_min, self.p_max))
            .finish()
    }
}

/// Frequency ladder `{-n/2, ..., n/2 - 1} * 2pi / length` in standard DFT order.
pub fn frequency_ladder(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * PI / length;
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            m as f64 * base
        })
        .collect()
}

fn check_axis(n: usize) -> Result<(), GridError> {
    if n < MIN_AXIS_LEN || !n.is_power_of_two() {
        return Err(GridError::BadSize(n));
    }
    Ok(())
}

fn check_bounds(lo: f64, hi: f64) -> Result<(), GridError> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(GridError::BadBounds(lo, hi));
    }
    Ok(())
}

impl PhaseSpaceGrid {
    pub fn new(nq: usize, np: usize, q_bounds: (f64, f64), p_bounds: (f64, f64)) -> Result<Self, GridError> {
        check_axis(nq)?;
        check_axis(np)?;
        check_bounds(q_bounds.0, q_bounds.1)?;
        check_bounds(p_bounds.0, p_bounds.1)?;
        let lq = q_bounds.1 - q_bounds.0;
        let lp = p_bounds.1 - p_bounds.0;
        Ok(Self {
            nq,
            np,
            q_min: q_bounds.0,
            q_max: q_bounds.1,
            p_min: p_bounds.0,
            p_max: p_bounds.1,
            dq: lq / nq as f64,
            dp: lp / np as f64,
            k: frequency_ladder(nq, lq),
            xi: frequency_ladder(np, lp),
        })
    }

    #[inline]
    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq
    }

    #[inline]
    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nq * self.np
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dq * self.dp
    }

    pub fn q_length(&self) -> f64 {
        self.q_max - self.q_min
    }

    pub fn p_length(&self) -> f64 {
        self.p_max - self.p_min
    }

    pub fn area(&self) -> f64 {
        self.q_length() * self.p_length()
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.q_length()
    }

    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.p_length()
    }

    /// Index of the `q` Nyquist mode in DFT order.
    pub fn q_nyquist(&self) -> usize {
        self.nq / 2
    }

    /// Index of the `p` Nyquist mode in DFT order.
    pub fn p_nyquist(&self) -> usize {
        self.np / 2
    }

    pub fn qs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nq).map(|i| self.q(i))
    }

    pub fn ps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.np).map(|j| self.p(j))
    }
}

/// A complex distribution sampled on a [`PhaseSpaceGrid`]: a Wigner function or
/// a classical phase-space density (units of 1/action, so the cell sum times
/// `dq dp` is dimensionless).
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Arc<PhaseSpaceGrid>,
    pub values: Vec<Complex64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(grid: Arc<PhaseSpaceGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
            time: 0.0,
        }
    }

    pub fn from_values(grid: Arc<PhaseSpaceGrid>, values: Vec<Complex64>, time: f64) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, time })
    }

    /// Samples a real function of `(q, p)` on every grid point.
    pub fn from_fn<F>(grid: Arc<PhaseSpaceGrid>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let np = grid.np;
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        values.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
            let q = grid.q(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = Complex64::new(f(q, grid.p(j)), 0.0);
            }
        });
        Self {
            grid,
            values,
            time: 0.0,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid.np + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let np = self.grid.np;
        &self.values[i * np..(i + 1) * np]
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `∫∫ f dq dp` as a complex number, summed row by row in fixed order.
    pub fn integral(&self) -> Complex64 {
        let np = self.grid.np;
        let rows: Vec<Complex64> = self
            .values
            .par_chunks(np)
            .map(|r| r.iter().sum::<Complex64>())
            .collect();
        rows.iter().sum::<Complex64>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Rescales so that the real part of the integral is exactly one.
    pub fn normalize(&mut self) {
        let n = self.integral().re;
        if n != 0.0 {
            self.scale(1.0 / n);
        }
    }

    /// `self = alpha * self + beta * other`.
    pub fn axpby(&mut self, alpha: Complex64, other: &Field, beta: Complex64) -> Result<(), GridError> {
        if !self.same_grid(other) {
            return Err(GridError::GridMismatch);
        }
        self.values
            .par_iter_mut()
            .zip(other.values.par_iter())
            .for_each(|(a, b)| *a = alpha * *a + beta * *b);
        Ok(())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

/// Which axis of a [`MixedField`] is in the frequency domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixedAxis {
    /// `g(q, xi)`: the momentum axis has been transformed.
    Xi,
    /// `h(k, p)`: the position axis has been transformed.
    K,
}

/// A field with one axis transformed. Storage layout is the same as [`Field`]:
/// row-major over (first axis, second axis) with the first axis being `q` or `k`.
#[derive(Clone, Debug)]
pub struct MixedField {
    pub grid: Arc<PhaseSpaceGrid>,
    pub values: Vec<Complex64>,
    pub time: f64,
    pub axis: MixedAxis,
}

/// Swaps rows and columns of a `rows x cols` row-major array into `dst`.
pub fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    assert_eq!(src.len(), rows * cols);
    assert_eq!(dst.len(), rows * cols);
    dst.par_chunks_mut(rows * TILE).enumerate().for_each(|(b, block)| {
        let c0 = b * TILE;
        let c1 = (c0 + TILE).min(cols);
        for r0 in (0..rows).step_by(TILE) {
            let r1 = (r0 + TILE).min(rows);
            for c in c0..c1 {
                let out = &mut block[(c - c0) * rows..(c - c0 + 1) * rows];
                for r in r0..r1 {
                    out[r] = src[r * cols + c];
                }
            }
        }
    });
}

/// Raw unnormalized DFTs along either axis of a grid, with a reusable transpose
/// buffer for the strided axis. Immutable plans; shareable across threads.
#[derive(Clone)]
pub struct AxisFfts {
    nq: usize,
    np: usize,
    fwd_p: Arc<dyn Fft<f64>>,
    inv_p: Arc<dyn Fft<f64>>,
    fwd_q: Arc<dyn Fft<f64>>,
    inv_q: Arc<dyn Fft<f64>>,
}

impl AxisFfts {
    pub fn new(grid: &PhaseSpaceGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nq: grid.nq,
            np: grid.np,
            fwd_p: planner.plan_fft_forward(grid.np),
            inv_p: planner.plan_fft_inverse(grid.np),
            fwd_q: planner.plan_fft_forward(grid.nq),
            inv_q: planner.plan_fft_inverse(grid.nq),
        }
    }

    fn rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize) {
        let rows_per_task = (4096 / len).max(1);
        data.par_chunks_mut(len * rows_per_task).for_each(|chunk| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        });
    }

    /// Unnormalized `exp(-i 2pi jl/n)` DFT along `p` of `(q, p)`-ordered data.
    pub fn forward_p(&self, data: &mut [Complex64]) {
        Self::rows(&self.fwd_p, data, self.np);
    }

    pub fn inverse_p(&self, data: &mut [Complex64]) {
        Self::rows(&self.inv_p, data, self.np);
    }

    /// DFT along `q` of data already transposed to `(p, q)` order.
    pub fn forward_q_transposed(&self, data: &mut [Complex64]) {
        Self::rows(&self.fwd_q, data, self.nq);
    }

    pub fn inverse_q_transposed(&self, data: &mut [Complex64]) {
        Self::rows(&self.inv_q, data, self.nq);
    }

    /// DFT along `q` of `(q, p)`-ordered data, using `scratch` for the transpose.
    pub fn forward_q(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        transpose(data, scratch, self.nq, self.np);
        self.forward_q_transposed(scratch);
        transpose(scratch, data, self.np, self.nq);
    }

    pub fn inverse_q(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        transpose(data, scratch, self.nq, self.np);
        self.inverse_q_transposed(scratch);
        transpose(scratch, data, self.np, self.nq);
    }
}

/// Measure-carrying transforms between `f(q,p)` and the mixed representations
/// `g(q, xi)` and `h(k, p)`.
#[derive(Clone)]
pub struct Transforms {
    grid: Arc<PhaseSpaceGrid>,
    ffts: AxisFfts,
    /// `exp(-i p_min xi_l)`
    p_shift: Vec<Complex64>,
    /// `exp(-i q_min k_i)`
    q_shift: Vec<Complex64>,
}

impl Transforms {
    pub fn new(grid: Arc<PhaseSpaceGrid>) -> Self {
        let ffts = AxisFfts::new(&grid);
        let p_shift = grid
            .xi
            .iter()
            .map(|&x| Complex64::from_polar(1.0, -grid.p_min * x))
            .collect();
        let q_shift = grid
            .k
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -grid.q_min * k))
            .collect();
        Self {
            grid,
            ffts,
            p_shift,
            q_shift,
        }
    }

    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    pub fn ffts(&self) -> &AxisFfts {
        &self.ffts
    }

    fn check(&self, field_grid: &Arc<PhaseSpaceGrid>) -> Result<(), GridError> {
        if Arc::ptr_eq(field_grid, &self.grid) || **field_grid == *self.grid {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    pub fn transform_p(&self, field: &Field) -> Result<MixedField, GridError> {
        self.check(&field.grid)?;
        let mut values = field.values.clone();
        self.ffts.forward_p(&mut values);
        let dp = self.grid.dp;
        let shift = &self.p_shift;
        values.par_chunks_mut(self.grid.np).for_each(|row| {
            for (v, s) in row.iter_mut().zip(shift) {
                *v *= s * dp;
            }
        });
        Ok(MixedField {
            grid: field.grid.clone(),
            values,
            time: field.time,
            axis: MixedAxis::Xi,
        })
    }

    pub fn inverse_transform_p(&self, g: &MixedField) -> Result<Field, GridError> {
        self.check(&g.grid)?;
        assert_eq!(g.axis, MixedAxis::Xi, "expected g(q, xi)");
        let mut values = g.values.clone();
        // dxi / 2pi = 1 / (np dp)
        let norm = 1.0 / (self.grid.np as f64 * self.grid.dp);
        let shift = &self.p_shift;
        values.par_chunks_mut(self.grid.np).for_each(|row| {
            for (v, s) in row.iter_mut().zip(shift) {
                *v *= s.conj() * norm;
            }
        });
        self.ffts.inverse_p(&mut values);
        Field::from_values(g.grid.clone(), values, g.time)
    }

    pub fn transform_q(&self, field: &Field) -> Result<MixedField, GridError> {
        self.check(&field.grid)?;
        let (nq, np) = (self.grid.nq, self.grid.np);
        let mut values = field.values.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); nq * np];
        self.ffts.forward_q(&mut values, &mut scratch);
        let dq = self.grid.dq;
        let shift = &self.q_shift;
        values.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
            let s = shift[i] * dq;
            row.iter_mut().for_each(|v| *v *= s);
        });
        Ok(MixedField {
            grid: field.grid.clone(),
            values,
            time: field.time,
            axis: MixedAxis::K,
        })
    }

    pub fn inverse_transform_q(&self, h: &MixedField) -> Result<Field, GridError> {
        self.check(&h.grid)?;
        assert_eq!(h.axis, MixedAxis::K, "expected h(k, p)");
        let (nq, np) = (self.grid.nq, self.grid.np);
        let mut values = h.values.clone();
        let norm = 1.0 / (nq as f64 * self.grid.dq);
        let shift = &self.q_shift;
        values.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
            let s = shift[i].conj() * norm;
            row.iter_mut().for_each(|v| *v *= s);
        });
        let mut scratch = vec![Complex64::new(0.0, 0.0); nq * np];
        self.ffts.inverse_q(&mut values, &mut scratch);
        Field::from_values(h.grid.clone(), values, h.time)
    }
}
