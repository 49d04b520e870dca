//! Scalar and sectional observables of a field, and quantum/classical comparison.
//!
//! Every phase-space average is a plain Riemann sum over the periodic grid. For a
//! Wigner function the monomial `q^n p^m` is the Weyl symbol of the symmetrized
//! operator, so these sums are quantum expectation values as well.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{Field, PhaseSpaceGrid};
use crate::model::ModelParams;

/// Margin used for the boundary-mass guard unless configured otherwise.
pub const DEFAULT_MARGIN: f64 = 0.1;
/// Highest supported total moment order.
pub const MAX_MOMENT_ORDER: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("moment order n + m = {0} exceeds {MAX_MOMENT_ORDER}")]
    MomentOrder(u32),
    #[error("moment <q^{n} p^{m}> overflowed")]
    Overflow { n: u32, m: u32 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("p0 = {p0} outside [{p_min}, {p_max}]")]
    SliceOutOfRange { p0: f64, p_min: f64, p_max: f64 },
    #[error("margin fraction {0} not in (0, 0.5)")]
    BadMargin(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// One row of the diagnostics time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub norm: f64,
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
    /// `<(qp + pq)/2>`.
    pub qp: f64,
    pub energy: f64,
    pub negativity: f64,
    pub minval: f64,
    pub boundary_mass: f64,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "time,norm,q1,p1,q2,p2,qp,energy,negativity,minval,boundary_mass,l1,l2";

    /// CSV row; floats use 17 significant digits, absent distances are empty.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        [
            fmt17(self.time),
            fmt17(self.norm),
            fmt17(self.q1),
            fmt17(self.p1),
            fmt17(self.q2),
            fmt17(self.p2),
            fmt17(self.qp),
            fmt17(self.energy),
            fmt17(self.negativity),
            fmt17(self.minval),
            fmt17(self.boundary_mass),
            opt(self.l1),
            opt(self.l2),
        ]
        .join(",")
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

#[derive(Default, Clone, Copy)]
struct Sums {
    norm: f64,
    q1: f64,
    p1: f64,
    q2: f64,
    p2: f64,
    qp: f64,
    energy: f64,
    negativity: f64,
    minval: f64,
    boundary: f64,
}

fn margin_cells(n: usize, margin: f64) -> usize {
    (margin * n as f64).round() as usize
}

#[inline]
fn in_band(i: usize, j: usize, grid: &PhaseSpaceGrid, mq: usize, mp: usize) -> bool {
    i < mq || i >= grid.nq - mq || j < mp || j >= grid.np - mp
}

/// Full record for one field. Row partial sums are combined in fixed order so the
/// result does not depend on the thread count.
pub fn record(field: &Field, params: &ModelParams, margin: f64) -> DiagnosticsRecord {
    let g = &*field.grid;
    let t = field.time;
    let (mq, mp) = (margin_cells(g.nq, margin), margin_cells(g.np, margin));
    let rows: Vec<Sums> = field
        .values
        .par_chunks(g.np)
        .enumerate()
        .map(|(i, row)| {
            let q = g.q(i);
            let v = params.potential(q, t);
            let mut s = Sums {
                minval: f64::INFINITY,
                ..Sums::default()
            };
            for (j, f) in row.iter().enumerate() {
                let p = g.p(j);
                let f = f.re;
                s.norm += f;
                s.p1 += p * f;
                s.p2 += p * p * f;
                s.negativity += (-f).max(0.0);
                s.minval = s.minval.min(f);
                if in_band(i, j, g, mq, mp) {
                    s.boundary += f.abs();
                }
            }
            s.q1 = q * s.norm;
            s.q2 = q * q * s.norm;
            s.qp = q * s.p1;
            s.energy = s.p2 / (2.0 * params.m) + v * s.norm;
            s
        })
        .collect();
    let mut acc = Sums {
        minval: f64::INFINITY,
        ..Sums::default()
    };
    for r in &rows {
        acc.norm += r.norm;
        acc.q1 += r.q1;
        acc.p1 += r.p1;
        acc.q2 += r.q2;
        acc.p2 += r.p2;
        acc.qp += r.qp;
        acc.energy += r.energy;
        acc.negativity += r.negativity;
        acc.minval = acc.minval.min(r.minval);
        acc.boundary += r.boundary;
    }
    let a = g.cell_area();
    DiagnosticsRecord {
        time: t,
        norm: acc.norm * a,
        q1: acc.q1 * a,
        p1: acc.p1 * a,
        q2: acc.q2 * a,
        p2: acc.p2 * a,
        qp: acc.qp * a,
        energy: acc.energy * a,
        negativity: acc.negativity * a,
        minval: acc.minval,
        boundary_mass: acc.boundary * a,
        l1: None,
        l2: None,
    }
}

/// Record for `field` including its distances to a twin field.
pub fn record_with_twin(
    field: &Field,
    twin: &Field,
    params: &ModelParams,
    margin: f64,
) -> Result<DiagnosticsRecord, DiagnosticsError> {
    let mut r = record(field, params, margin);
    r.l1 = Some(distance(field, twin, Norm::L1)?);
    r.l2 = Some(distance(field, twin, Norm::L2)?);
    Ok(r)
}

/// `∫∫ q^n p^m f dq dp`.
pub fn moment(field: &Field, n: u32, m: u32) -> Result<f64, DiagnosticsError> {
    if n + m > MAX_MOMENT_ORDER {
        return Err(DiagnosticsError::MomentOrder(n + m));
    }
    let g = &*field.grid;
    let rows: Vec<f64> = field
        .values
        .par_chunks(g.np)
        .enumerate()
        .map(|(i, row)| {
            let qn = g.q(i).powi(n as i32);
            row.iter()
                .enumerate()
                .map(|(j, f)| g.p(j).powi(m as i32) * f.re)
                .sum::<f64>()
                * qn
        })
        .collect();
    let v = rows.iter().sum::<f64>() * g.cell_area();
    if !v.is_finite() {
        return Err(DiagnosticsError::Overflow { n, m });
    }
    Ok(v)
}

/// `∫∫ max(-f, 0) dq dp`. Equal to `∫∫ (|f| - f) / 2`; the one-sided form is the
/// one used throughout.
pub fn negativity(field: &Field) -> f64 {
    let np = field.grid.np;
    let rows: Vec<f64> = field
        .values
        .par_chunks(np)
        .map(|r| r.iter().map(|v| (-v.re).max(0.0)).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() * field.grid.cell_area()
}

pub fn distance(a: &Field, b: &Field, which: Norm) -> Result<f64, DiagnosticsError> {
    if !a.same_grid(b) {
        return Err(DiagnosticsError::GridMismatch);
    }
    let np = a.grid.np;
    let rows: Vec<f64> = a
        .values
        .par_chunks(np)
        .zip(b.values.par_chunks(np))
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(x, y)| match which {
                    Norm::L1 => (x - y).norm(),
                    Norm::L2 => (x - y).norm_sqr(),
                })
                .sum::<f64>()
        })
        .collect();
    let s = rows.iter().sum::<f64>() * a.grid.cell_area();
    Ok(match which {
        Norm::L1 => s,
        Norm::L2 => s.sqrt(),
    })
}

/// `f(q, p0)` along one momentum line.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub p0: f64,
    /// Lower bracketing row.
    pub row: usize,
    /// Weight of the upper row in the linear interpolation.
    pub weight: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn slice(field: &Field, p0: f64) -> Result<Slice, DiagnosticsError> {
    let g = &*field.grid;
    if !(p0 >= g.p_min && p0 <= g.p_max) {
        return Err(DiagnosticsError::SliceOutOfRange {
            p0,
            p_min: g.p_min,
            p_max: g.p_max,
        });
    }
    let x = (p0 - g.p_min) / g.dp;
    let row = (x.floor() as usize).min(g.np - 1);
    let weight = x - row as f64;
    let upper = (row + 1) % g.np;
    let points = (0..g.nq)
        .map(|i| {
            let v = (1.0 - weight) * field.at(i, row).re + weight * field.at(i, upper).re;
            (g.q(i), v)
        })
        .collect();
    Ok(Slice {
        p0,
        row,
        weight,
        points,
    })
}

/// `∫∫ |f|` over the outer band of relative width `margin_fraction` on each edge.
pub fn boundary_mass(field: &Field, margin_fraction: f64) -> Result<f64, DiagnosticsError> {
    if !(margin_fraction > 0.0 && margin_fraction < 0.5) {
        return Err(DiagnosticsError::BadMargin(margin_fraction));
    }
    let g = &*field.grid;
    let (mq, mp) = (margin_cells(g.nq, margin_fraction), margin_cells(g.np, margin_fraction));
    let rows: Vec<f64> = field
        .values
        .par_chunks(g.np)
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| in_band(i, *j, g, mq, mp))
                .map(|(_, v)| v.re.abs())
                .sum::<f64>()
        })
        .collect();
    Ok(rows.iter().sum::<f64>() * g.cell_area())
}

/// Mean of the tail `fraction` of a series.
pub fn plateau(values: &[f64], fraction: f64) -> f64 {
    let n = values.len();
    let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
    let tail = &values[n.saturating_sub(take)..];
    tail.iter().sum::<f64>() / tail.len().max(1) as f64
}

/// Agreement threshold: midpoint of the long-time L1 plateaus of a strongly
/// diffusive run and a weakly diffusive control.
pub fn agreement_threshold(strong_l1: &[f64], control_l1: &[f64], fraction: f64) -> f64 {
    0.5 * (plateau(strong_l1, fraction) + plateau(control_l1, fraction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseSpaceGrid;
    use crate::states::{cat_state_wigner, gaussian_wigner, GaussianSpec};
    use num_complex::Complex64;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(n: usize, half: f64) -> Arc<PhaseSpaceGrid> {
        Arc::new(PhaseSpaceGrid::new(n, n, (-half, half), (-half, half)).unwrap())
    }

    fn gauss(q0: f64, p0: f64, sq: f64, sp: f64, g: Arc<PhaseSpaceGrid>) -> Field {
        gaussian_wigner(
            &GaussianSpec {
                q0,
                p0,
                sigma_q: sq,
                sigma_p: sp,
                weight: 1.0,
            },
            g,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_moments() {
        let f = gauss(0.5, -0.25, 0.3, 0.4, grid(128, 4.0));
        assert!((moment(&f, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((moment(&f, 1, 0).unwrap() - 0.5).abs() < 1e-10);
        assert!((moment(&f, 0, 2).unwrap() - (0.0625 + 0.16)).abs() < 1e-10);
        assert_eq!(moment(&f, 4, 3).unwrap_err(), DiagnosticsError::MomentOrder(7));
        let r = record(&f, &ModelParams::free_particle(1.0, 0.1, 0.0), DEFAULT_MARGIN);
        assert!((r.q1 - 0.5).abs() < 1e-10);
        assert!((r.qp - 0.5 * -0.25).abs() < 1e-10);
        assert!((r.energy - 0.5 * (0.0625 + 0.16)).abs() < 1e-10);
        assert_eq!(r.negativity, 0.0);
        assert!(r.minval >= 0.0);
    }

    #[test]
    fn cat_moments_and_negativity() {
        let hbar = 0.1;
        let q0 = 1.2;
        let params = ModelParams::duffing(hbar, 0.0);
        let a = GaussianSpec::coherent(q0, 0.0, hbar);
        let b = GaussianSpec::coherent(-q0, 0.0, hbar);
        let f = cat_state_wigner(&a, &b, grid(256, 4.0), &params).unwrap();
        let s2 = hbar / 2.0;
        let ovl = (-(q0 * q0) / (2.0 * s2)).exp();
        let k = 2.0 * q0 / hbar;
        assert!(moment(&f, 1, 0).unwrap().abs() < 1e-12);
        let q2 = (q0 * q0 + s2 + s2 * ovl) / (1.0 + ovl);
        assert!((moment(&f, 2, 0).unwrap() - q2).abs() < 1e-10);
        // Ridge against p^2: exp(-k^2 s^2 / 2) (s^2 - k^2 s^4), same exponent as ovl.
        let p2 = (s2 + ovl * (s2 - k * k * s2 * s2)) / (1.0 + ovl);
        assert!((moment(&f, 0, 2).unwrap() - p2).abs() < 1e-10);
        assert!(negativity(&f) > 0.1);
    }

    #[test]
    fn negativity_sign_identity() {
        let g = grid(32, 1.0);
        let f = Field::from_fn(g.clone(), |q, p| (3.0 * q).sin() * (2.0 * p).cos() + 0.1 * q);
        let mut neg = f.clone();
        neg.scale(-1.0);
        let lhs = negativity(&neg) - negativity(&f);
        assert!((lhs - f.integral().re).abs() < 1e-12);
        assert!(f.integral().re.abs() > 1e-3);
    }

    #[test]
    fn distances() {
        let g = grid(128, 4.0);
        let a = gauss(-2.0, 0.0, 0.2, 0.2, g.clone());
        let b = gauss(2.0, 0.0, 0.2, 0.2, g.clone());
        assert_eq!(distance(&a, &a, Norm::L1).unwrap(), 0.0);
        assert!((distance(&a, &b, Norm::L1).unwrap() - 2.0).abs() < 1e-10);
        let other = Field::zeros(grid(64, 4.0));
        assert_eq!(
            distance(&a, &other, Norm::L2).unwrap_err(),
            DiagnosticsError::GridMismatch
        );
    }

    #[test]
    fn slice_of_gaussian() {
        let g = grid(256, 4.0);
        let (sq, sp) = (0.3, 0.25);
        let p0 = g.p(140);
        let f = gauss(0.1, p0, sq, sp, g.clone());
        let s = slice(&f, p0).unwrap();
        assert_eq!(s.row, 140);
        assert!(s.weight.abs() < 1e-12);
        let mass: f64 = s.points.iter().map(|(_, v)| v).sum::<f64>() * g.dq;
        assert!((mass - 1.0 / (2.0 * PI * sp * sp).sqrt()).abs() < 1e-9);
        // Between rows the value interpolates linearly.
        let mid = slice(&f, p0 + 0.5 * g.dp).unwrap();
        assert!((mid.weight - 0.5).abs() < 1e-9);
        let (_, v) = mid.points[128];
        assert!((v - 0.5 * (f.at(128, 140).re + f.at(128, 141).re)).abs() < 1e-12);
        assert!(matches!(
            slice(&f, g.p_min - 1.0),
            Err(DiagnosticsError::SliceOutOfRange { .. })
        ));
    }

    #[test]
    fn boundary_mass_cases() {
        let g = grid(1024, 5.0);
        let f = gauss(0.0, 0.0, 0.5, 0.5, g.clone());
        // Margin 0.1 of a box of half-width 10 std: band starts 8 std out.
        assert!(boundary_mass(&f, 0.1).unwrap() < 1e-6);
        let uniform = Field::from_fn(g.clone(), |_, _| 1.0 / g.area());
        // 102 of 1024 cells per side fall in the band
        let inner = (1024.0 - 204.0) / 1024.0;
        let band = boundary_mass(&uniform, 0.1).unwrap();
        assert!((band - (1.0 - inner * inner)).abs() < 1e-12);
        assert!((band - 0.36).abs() < 2e-3);
        assert!(boundary_mass(&f, 0.5).is_err());
    }

    #[test]
    fn threshold_is_plateau_midpoint() {
        let strong = [0.5, 0.3, 0.1, 0.1];
        let weak = [0.5, 0.9, 1.1, 1.1];
        assert!((agreement_threshold(&strong, &weak, 0.5) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn csv_row_has_all_columns() {
        let f = gauss(0.0, 0.0, 0.5, 0.5, grid(64, 5.0));
        let r = record(&f, &ModelParams::default(), DEFAULT_MARGIN);
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), DiagnosticsRecord::CSV_HEADER.split(',').count());
        assert!(row.ends_with(",,"));
        let x: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(x, r.norm);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_from(seed: u64, g: Arc<PhaseSpaceGrid>) -> Field {
            let s = seed as f64;
            Field::from_fn(g, move |q, p| ((s + 1.0) * q).sin() * (p + 0.3 * s).cos() + 0.01 * s)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn moment_is_linear(s1 in 0u64..50, s2 in 0u64..50, a in -2.0f64..2.0, n in 0u32..3, m in 0u32..3) {
                let g = grid(32, 2.0);
                let f1 = field_from(s1, g.clone());
                let f2 = field_from(s2, g.clone());
                let mut c = f1.clone();
                c.axpby(Complex64::new(a, 0.0), &f2, Complex64::new(1.0, 0.0)).unwrap();
                let lhs = moment(&c, n, m).unwrap();
                let rhs = a * moment(&f1, n, m).unwrap() + moment(&f2, n, m).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
            }

            #[test]
            fn triangle_inequality(s1 in 0u64..50, s2 in 0u64..50, s3 in 0u64..50) {
                let g = grid(32, 2.0);
                let (a, b, c) = (field_from(s1, g.clone()), field_from(s2, g.clone()), field_from(s3, g));
                for w in [Norm::L1, Norm::L2] {
                    let ab = distance(&a, &b, w).unwrap();
                    let bc = distance(&b, &c, w).unwrap();
                    let ac = distance(&a, &c, w).unwrap();
                    prop_assert!(ac <= ab + bc + 1e-12);
                }
            }
        }
    }
}
