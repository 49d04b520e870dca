//! Phase-space simulation of open-system Wigner dynamics and the dual classical
//! Fokker-Planck equation for driven one-dimensional potentials.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`]: periodic phase-space grid, fields and axis transforms;
//! * [`model`]: the driven quartic potential and its parameters;
//! * [`states`]: Gaussian and two-packet superposition initial conditions;
//! * [`evolve`]: split-operator stepping in quantum and classical mode;
//! * [`diagnostics`]: moments, negativity, distances, slices;
//! * [`timescales`]: structure-termination and transition times;
//! * [`langevin`]: stochastic trajectories, Lyapunov exponents, unstable manifolds;
//! * [`config`] and [`checkpoint`]: run configuration and field files.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod evolve;
pub mod grid;
pub mod langevin;
pub mod model;
pub mod states;
pub mod timescales;

pub use diagnostics::{DiagnosticsRecord, Norm};
pub use evolve::{Mode, StepPlan};
pub use grid::{Field, PhaseSpaceGrid, Transforms};
pub use model::ModelParams;
pub use states::GaussianSpec;
pub use timescales::TimescaleReport;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
