//! Geometry of mushy sets on a 2D melting front: masks for the three
//! bands, Hausdorff distances between them and the Hölder quotient.

use stefan_mushy::enthalpy::EnthalpyParams;
use stefan_mushy::forward::{solve_nonlinear, Numerics, PicardSettings};
use stefan_mushy::grid::{BoundaryControl, SpatialGrid, TimeGrid};
use stefan_mushy::mushy::{hausdorff_distance, holder_quotient, mushy_set, Band, TargetSet, coverage};

fn main() -> stefan_mushy::Result<()> {
    let grid = SpatialGrid::rectangle(1.0, 1.0, 24, 24)?;
    let times = TimeGrid::new(0.05, 40)?;
    let params = EnthalpyParams::new(2.0, 1.0, 1.0, 1e-3, 0.25, 0.05)?;
    let y0 = grid.sample(|c| {
        let r = ((c[0] - 0.5).powi(2) + (c[1] - 0.5).powi(2)).sqrt();
        (2.0 - 8.0 * (r - 0.2)).clamp(-1.0, 2.0)
    });
    let u = BoundaryControl::zeros(&grid, times);
    let (y, _) = solve_nonlinear(&u, &y0, &params, &PicardSettings::default(), &Numerics::new(2)?, &grid)?;

    let n = times.steps();
    let bands = [("mu", Band::mu(&params)), ("2 mu", Band::two_mu(&params)), ("lambda^1/4", Band::quarter_power(&params))];
    let masks: Vec<_> = bands.iter().map(|(_, b)| mushy_set(&y, n, *b)).collect::<Result<_, _>>()?;
    for ((name, _), m) in bands.iter().zip(&masks) {
        println!("band {name:<11} {} cells", m.cells().len());
    }
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            match hausdorff_distance(&grid, &masks[i], &masks[j]) {
                Ok(d) => println!("d_H({}, {}) = {:.4}", bands[i].0, bands[j].0, d.value()),
                Err(e) => println!("d_H({}, {}): {e}", bands[i].0, bands[j].0),
            }
        }
    }
    let initial = mushy_set(&y, 0, Band::mu(&params))?;
    if let Ok(d) = hausdorff_distance(&grid, &initial, &masks[0]) {
        println!("d_H(t = 0, T) = {:.4}", d.value());
    }

    let ring = TargetSet::from_boxes(&grid, &[[0.2, 0.8, 0.45, 0.55]])?;
    println!("coverage of a horizontal strip: {:.3}", coverage(&ring, &masks[0]));
    let holder = holder_quotient(&y, 0.1, 2000, 7)?;
    println!("Hölder quotient {:.3} over {} pairs", holder.quotient, holder.samples);
    Ok(())
}
