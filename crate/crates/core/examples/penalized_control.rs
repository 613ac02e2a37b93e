//! Epsilon continuation for the frozen-coefficient penalized problem on
//! the desk instance.

use stefan_mushy::config::RunConfig;
use stefan_mushy::control::epsilon_continuation;
use stefan_mushy::forward::StepOperators;
use stefan_mushy::grid::SpaceTimeField;

fn main() -> stefan_mushy::Result<()> {
    let exp = RunConfig::desk().build()?;
    let target = exp.target.clone().expect("desk instance has a target");
    let z = SpaceTimeField::constant_in_time(&exp.grid, exp.times, &exp.y0)?;
    let ops = StepOperators::from_field(&z, &exp.params, &exp.numerics)?;
    let s = &exp.settings;
    let res = epsilon_continuation(&ops, &exp.y0, &target, exp.params.mu, exp.params.rho, &s.eps_schedule, &s.inner, 0.0, None)?;
    println!("{:>10} {:>12} {:>10} {:>10} {:>7}", "eps", "J", "|u|", "violation", "newton");
    for st in &res.trace {
        println!(
            "{:>10.3e} {:>12.5e} {:>10.4} {:>10.3e} {:>7}",
            st.epsilon, st.value, st.control_norm, st.violation, st.newton_iterations
        );
    }
    let yt = res.y.terminal();
    let cells: Vec<usize> = target.cells().collect();
    let (lo, hi) = cells.iter().fold((f64::MAX, f64::MIN), |(a, b), &c| (a.min(yt[c]), b.max(yt[c])));
    println!("y(T) on the target in [{lo:.4}, {hi:.4}]");
    Ok(())
}
