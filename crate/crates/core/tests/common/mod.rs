#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use esh_core::continuation::{continue_from_guess, Branch, BranchError, BranchLabel, ContinuationOptions, Direction};
use esh_core::steady::wnl_seed;
use esh_core::{Grid, ModelParams};

/// Seed amplitude parameter: localized states bifurcate at r = 0 and are
/// seeded slightly below it.
pub const R_SEED: f64 = -0.06;

pub fn params(alpha: f64, beta: f64) -> ModelParams {
    ModelParams::new(R_SEED, 1.8, alpha, beta).unwrap()
}

pub fn wide_grid() -> Arc<Grid> {
    Grid::new(64.0 * PI, 1024).unwrap()
}

pub fn options(folds: Option<usize>) -> ContinuationOptions {
    ContinuationOptions { ds_max: 0.1, max_folds: folds, direction: Direction::DecreasingR, ..Default::default() }
}

/// L0 (`l1 = false`) or L1 branch from the small-amplitude seed.
pub fn snake(grid: &Arc<Grid>, alpha: f64, beta: f64, l1: bool, folds: Option<usize>) -> Branch {
    let p = params(alpha, beta);
    let (phi, label) = if l1 { (PI, BranchLabel::L1) } else { (0.0, BranchLabel::L0) };
    let guess = wnl_seed(grid, &p, phi).unwrap();
    match continue_from_guess(&guess, &p, label, &options(folds)) {
        Ok(b) => b,
        Err(BranchError::Stalled { partial, .. }) => *partial,
        Err(e) => panic!("continuation failed at alpha={alpha}, beta={beta}: {e}"),
    }
}

/// Indices between the first and second fold: the stable one-peak segment.
pub fn one_peak_segment(branch: &Branch) -> std::ops::Range<usize> {
    let f = branch.event_indices(esh_core::continuation::EventType::Fold);
    f[0]..f[1] + 1
}
