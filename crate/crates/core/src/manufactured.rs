//! Cosine eigenmode of the constant-coefficient Neumann problem, used for
//! convergence studies of the frozen solver.

use std::f64::consts::PI;

use crate::error::Result;
use crate::forward::{propagate, StepOperators};
use crate::grid::{l2_norm_space, BoundaryControl, SpatialGrid, TimeGrid};
use crate::linsolve::LinearSolver;

/// Relative `L2` error at `T` of the discrete solution started from
/// `cos(pi x / L)` against `exp(-k (pi/L)^2 T) cos(pi x / L)`.
pub fn cosine_mode_error(length: f64, cells: usize, horizon: f64, steps: usize, k: f64) -> Result<f64> {
    let grid = SpatialGrid::line(length, cells)?;
    let times = TimeGrid::new(horizon, steps)?;
    let wave = PI / length;
    let y0 = grid.sample(|c| (wave * c[0]).cos());
    let ops = StepOperators::uniform(&grid, times, k, LinearSolver::Auto)?;
    let y = propagate(&ops, &y0, &BoundaryControl::zeros(&grid, times))?;
    let decay = (-k * wave * wave * horizon).exp();
    let err: Vec<f64> = y.terminal().iter().zip(&y0).map(|(a, b)| a - decay * b).collect();
    Ok(l2_norm_space(&grid, &err) / (decay * l2_norm_space(&grid, &y0)))
}

/// Least-squares slope of `log(error)` against `log(size)`.
pub fn observed_order(sizes: &[f64], errors: &[f64]) -> f64 {
    let n = sizes.len() as f64;
    let xs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
