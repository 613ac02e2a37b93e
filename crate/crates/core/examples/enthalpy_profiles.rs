//! Tabulates the enthalpy, the smoothed conductivity and the mollified
//! coefficient of a frozen two-phase state.

use stefan_mushy::enthalpy::{beta, h_lambda, mollified_coefficient, EnthalpyParams, MollifierSpec};
use stefan_mushy::grid::{SpaceTimeField, SpatialGrid, TimeGrid};

fn main() -> stefan_mushy::Result<()> {
    let p = EnthalpyParams::new(2.0, 1.0, 1.0, 1e-2, 0.25, 0.05)?;
    println!("lambda^alpha = {:.4}, k* = {}, slope bound = {:.3}", p.flat_value(), p.k_star(), p.slope_bound());
    println!("{:>8} {:>10} {:>10}", "r", "beta", "h_lambda");
    for i in 0..=16 {
        let r = -1.0 + 3.0 * i as f64 / 16.0;
        println!("{r:>8.3} {:>10.4} {:>10.4}", beta(r, &p), h_lambda(r, &p));
    }

    let grid = SpatialGrid::line(1.0, 50)?;
    let times = TimeGrid::new(0.1, 20)?;
    let slice = grid.sample(|c| 4.0 * c[0] - 1.5);
    let z = SpaceTimeField::constant_in_time(&grid, times, &slice)?;
    let spec = MollifierSpec::new(1, MollifierSpec::DEFAULT_ORDER)?;
    println!("\n{:>6} {:>10} {:>12}", "x", "z", "H_lambda(z)");
    for x in [0.1, 0.3, 0.375, 0.45, 0.6, 0.75, 0.9] {
        let h = mollified_coefficient(&z, 0.0, &[x], &p, &spec)?;
        println!("{x:>6.3} {:>10.4} {h:>12.5}", 4.0 * x - 1.5);
    }
    Ok(())
}
