//! Melting a solid slab with a constant inflow on the left wall: Picard
//! iteration for the state-dependent coefficient and the mushy region over time.

use stefan_mushy::config::RunConfig;
use stefan_mushy::forward::{energy_report, mass_balance_defects, solve_nonlinear};
use stefan_mushy::grid::BoundaryControl;
use stefan_mushy::mushy::{mushy_mask, Band};

fn main() -> stefan_mushy::Result<()> {
    let exp = RunConfig::desk().build()?;
    let u = BoundaryControl::from_fn(&exp.grid, exp.times, |_, f| if f.center[0] == 0.0 { 4.0 } else { 0.0 });
    let (y, picard) = solve_nonlinear(&u, &exp.y0, &exp.params, &exp.settings.picard, &exp.numerics, &exp.grid)?;
    println!("picard iterations {}", picard.iterations);
    for (i, r) in picard.residuals.iter().enumerate() {
        println!("  {:>3} {r:.3e}", i + 1);
    }

    let band = Band::mu(&exp.params);
    let h = exp.grid.spacing()[0];
    for n in (0..=exp.times.steps()).step_by(32) {
        let cells = mushy_mask(y.level(n), n, band).cells();
        let span = match (cells.first(), cells.last()) {
            (Some(a), Some(b)) => format!("[{:.3}, {:.3}]", *a as f64 * h, (*b + 1) as f64 * h),
            _ => "empty".into(),
        };
        println!("t {:.4}  mushy cells {:>3}  span {span}", exp.times.time(n), cells.len());
    }

    let worst = mass_balance_defects(&y, &u).into_iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    let energy = energy_report(&y, &u, &exp.params)?;
    println!("max mass defect {worst:.2e}, energy ratio {:.4}, derivative ratio {:.4e}", energy.energy_ratio, energy.derivative_ratio);
    Ok(())
}
