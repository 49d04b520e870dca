//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use wfps_core::states::{cat_state_wigner, GaussianSpec};
use wfps_core::{Field, ModelParams, PhaseSpaceGrid};

/// Default Duffing box at `n x n` with the default two-lobe initial state.
pub fn duffing_cat(n: usize, params: &ModelParams) -> Field {
    let grid = Arc::new(PhaseSpaceGrid::new(n, n, (-8.0, 8.0), (-17.0, 17.0)).expect("grid"));
    let a = GaussianSpec::coherent(1.0, 0.0, params.hbar);
    let b = GaussianSpec::coherent(-1.0, 0.0, params.hbar);
    cat_state_wigner(&a, &b, grid, params).expect("initial state")
}
