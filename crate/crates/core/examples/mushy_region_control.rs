//! Full control loop: drives the terminal mushy region of the nonlinear
//! system over the target `[0.4, 0.6]`. Pass an `alpha` to override 0.25.

use stefan_mushy::config::RunConfig;
use stefan_mushy::control::outer_fixed_point;
use stefan_mushy::mushy::{mushy_mask, Band};

fn main() -> stefan_mushy::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut config = RunConfig::desk();
    if let Some(a) = std::env::args().nth(1) {
        config.physics.alpha = a.parse().expect("alpha must be a number");
    }
    let exp = config.build()?;
    let target = exp.target.clone().expect("desk instance has a target");
    let (u, y, report) = outer_fixed_point(&exp.grid, exp.times, &exp.y0, &target, &exp.params, &exp.settings, &exp.numerics)?;
    for r in &report.records {
        println!("outer {:>3}  z change {:.3e}  coverage {:.3}", r.iteration, r.z_change, r.coverage);
    }
    println!(
        "success {}, coverage {}, |u| {:.4}, picard iterations {}",
        report.success,
        report.final_coverage,
        u.norm(),
        report.picard.iterations
    );
    let mask = mushy_mask(y.terminal(), exp.times.steps(), Band::mu(&exp.params));
    let h = exp.grid.spacing()[0];
    let cells = mask.cells();
    if let (Some(a), Some(b)) = (cells.first(), cells.last()) {
        println!("terminal mushy cells {} spanning [{:.3}, {:.3}]", cells.len(), *a as f64 * h, (*b + 1) as f64 * h);
    }
    let left: Vec<f64> = (0..exp.times.steps()).step_by(32).map(|n| u.step(n)[0]).collect();
    println!("left flux every 32 steps: {left:.3?}");
    Ok(())
}
