//! The backward adjoint is the exact transpose of the forward scheme:
//! duality residuals in 1D and 2D and a finite-difference gradient check.

use stefan_mushy::adjoint::{AdjointMode, TerminalPenaltyData};
use stefan_mushy::control::PenaltyEvaluator;
use stefan_mushy::enthalpy::EnthalpyParams;
use stefan_mushy::forward::{Numerics, StepOperators};
use stefan_mushy::grid::{BoundaryControl, SpaceTimeField, SpatialGrid, TimeGrid};
use stefan_mushy::mushy::TargetSet;
use stefan_mushy::runner::{duality_probes, gradient_probes};

fn operators(grid: &SpatialGrid, params: &EnthalpyParams) -> stefan_mushy::Result<StepOperators> {
    let times = TimeGrid::new(0.2, 32)?;
    let mut z = SpaceTimeField::zeros(grid, times);
    for n in 0..times.levels() {
        let t = times.time(n);
        z.level_mut(n).copy_from_slice(&grid.sample(|c| -1.0 + 3.0 * c[0] + 0.5 * c[1] + 4.0 * t));
    }
    StepOperators::from_field(&z, params, &Numerics::new(grid.dimension())?)
}

fn main() -> stefan_mushy::Result<()> {
    let params = EnthalpyParams::new(2.0, 1.0, 1.0, 1e-4, 0.25, 0.05)?;
    for grid in [SpatialGrid::line(1.0, 64)?, SpatialGrid::rectangle(1.0, 1.0, 16, 16)?] {
        let ops = operators(&grid, &params)?;
        let exact = duality_probes(&ops, 20, 1, AdjointMode::Transpose)?;
        let shifted = duality_probes(&ops, 20, 1, AdjointMode::Mismatched)?;
        println!("{}D: transpose {exact:.2e}, shifted operator {shifted:.2e}", grid.dimension());
    }

    let grid = SpatialGrid::line(1.0, 64)?;
    let ops = operators(&grid, &params)?;
    let y0 = grid.sample(|c| if c[0] < 0.5 { -0.5 } else { 1.5 });
    let target = TargetSet::from_boxes(&grid, &[[0.3, 0.5, 0.0, 0.0]])?;
    let eval = PenaltyEvaluator::new(&ops, &y0, TerminalPenaltyData::new(1e-2, target, params.mu, params.rho)?)?;
    let u = BoundaryControl::from_fn(&grid, ops.times(), |t, _| 1.0 - 4.0 * t);
    println!("gradient vs central differences: {:.2e}", gradient_probes(&eval, &u, 5, 3)?);
    Ok(())
}
