//! End-to-end acceptance criteria. Each criterion prints one `ACCEPTANCE`
//! line with its measured values; the run fails if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use stefan_mushy::adjoint::AdjointMode;
use stefan_mushy::baselines;
use stefan_mushy::config::RunConfig;
use stefan_mushy::control::{epsilon_continuation, outer_fixed_point, PenaltyEvaluator};
use stefan_mushy::adjoint::TerminalPenaltyData;
use stefan_mushy::enthalpy::EnthalpyParams;
use stefan_mushy::forward::{
    classical_region_residual, manufactured_truncation_residual, solve_frozen, FrozenProblem, Numerics,
    StepOperators,
};
use stefan_mushy::grid::{l2_norm_space, BoundaryControl, SpaceTimeField, SpatialGrid, TimeGrid};
use stefan_mushy::manufactured::{cosine_mode_error, observed_order};
use stefan_mushy::runner::{duality_probes, gradient_probes, run_verify, VerifyOptions};

fn report(id: u32, name: &str, passed: bool, detail: String) {
    println!("ACCEPTANCE #{id} {name}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
}

fn desk_params(alpha: f64) -> EnthalpyParams {
    EnthalpyParams::new(2.0, 1.0, 1.0, 1e-4, alpha, 0.05).unwrap()
}

fn criterion_1_frozen_solver_matches_the_eigenmode() -> bool {
    let started = Instant::now();
    let g = SpatialGrid::line(1.0, 256).unwrap();
    let times = TimeGrid::new(0.1, 512).unwrap();
    let p = desk_params(0.25);
    let y0 = g.sample(|c| (PI * c[0]).cos());
    // z deep in the solid branch makes the coefficient k1 everywhere
    let prob = FrozenProblem {
        z: SpaceTimeField::constant_in_time(&g, times, &vec![-5.0; 256]).unwrap(),
        u: BoundaryControl::zeros(&g, times),
        y0: y0.clone(),
        params: p,
    };
    let y = solve_frozen(&prob, &Numerics::new(1).unwrap()).unwrap();
    let decay = (-p.k1 * PI * PI * 0.1).exp();
    let err: Vec<f64> = y.terminal().iter().zip(&y0).map(|(a, b)| a - decay * b).collect();
    let rel = l2_norm_space(&g, &err) / (decay * l2_norm_space(&g, &y0));

    let cells = [32usize, 64, 128, 256];
    let h_err: Vec<f64> = cells.iter().map(|&n| cosine_mode_error(1.0, n, 0.1, n * n / 32, p.k1).unwrap()).collect();
    let h_order = observed_order(&cells.map(|n| 1.0 / n as f64), &h_err);
    let steps = [16usize, 32, 64, 128];
    let dt_err: Vec<f64> = steps.iter().map(|&n| cosine_mode_error(1.0, 1024, 0.1, n, p.k1).unwrap()).collect();
    let dt_order = observed_order(&steps.map(|n| 0.1 / n as f64), &dt_err);
    let elapsed = started.elapsed();

    let passed = rel < 0.01 && h_order >= 1.8 && dt_order >= 0.9 && elapsed < Duration::from_secs(10);
    report(
        1,
        "frozen solver",
        passed,
        format!("rel L2 {rel:.3e}, order h {h_order:.3}, order dt {dt_order:.3}, {:.2}s", elapsed.as_secs_f64()),
    );
    passed
}

fn probe_ops(grid: &SpatialGrid, steps: usize) -> StepOperators {
    let times = TimeGrid::new(0.2, steps).unwrap();
    let p = desk_params(0.25);
    let mut z = SpaceTimeField::zeros(grid, times);
    for n in 0..times.levels() {
        let t = times.time(n);
        let slice = grid.sample(|c| -1.0 + 3.0 * c[0] + 0.5 * c[1] + 2.0 * t);
        z.level_mut(n).copy_from_slice(&slice);
    }
    StepOperators::from_field(&z, &p, &Numerics::new(grid.dimension()).unwrap()).unwrap()
}

fn criterion_2_discrete_duality() -> bool {
    let started = Instant::now();
    let grids = [
        SpatialGrid::line(1.0, 32).unwrap(),
        SpatialGrid::line(1.0, 64).unwrap(),
        SpatialGrid::rectangle(1.0, 1.0, 8, 8).unwrap(),
        SpatialGrid::rectangle(1.0, 1.0, 16, 16).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for (i, g) in grids.iter().enumerate() {
        let ops = probe_ops(g, 32);
        worst = worst.max(duality_probes(&ops, 20, 100 + i as u64, AdjointMode::Transpose).unwrap());
    }
    let elapsed = started.elapsed();
    let passed = worst <= 1e-9 && elapsed < Duration::from_secs(5);
    report(2, "discrete duality", passed, format!("worst residual {worst:.3e} over 80 probes, {:.2}s", elapsed.as_secs_f64()));
    passed
}

fn desk_y0(g: &SpatialGrid) -> Vec<f64> {
    let config = RunConfig::desk();
    config.initial.evaluate(g).unwrap()
}

fn criterion_3_gradient_matches_finite_differences() -> bool {
    let started = Instant::now();
    let g = SpatialGrid::line(1.0, 64).unwrap();
    let times = TimeGrid::new(0.2, 128).unwrap();
    let p = desk_params(0.25);
    let y0 = desk_y0(&g);
    let z = SpaceTimeField::constant_in_time(&g, times, &y0).unwrap();
    let ops = StepOperators::from_field(&z, &p, &Numerics::new(1).unwrap()).unwrap();
    let target = stefan_mushy::mushy::TargetSet::from_boxes(&g, &[[0.4, 0.6, 0.0, 0.0]]).unwrap();
    let data = TerminalPenaltyData::new(1e-2, target, p.mu, p.rho).unwrap();
    let eval = PenaltyEvaluator::new(&ops, &y0, data).unwrap();
    let u = BoundaryControl::from_fn(&g, times, |t, f| if f.center[0] == 0.0 { 3.0 + 5.0 * t } else { -1.0 });
    let worst = gradient_probes(&eval, &u, 5, 7).unwrap();
    let elapsed = started.elapsed();
    let passed = worst <= 1e-6 && elapsed < Duration::from_secs(10);
    report(3, "gradient exactness", passed, format!("worst relative error {worst:.3e}, {:.2}s", elapsed.as_secs_f64()));
    passed
}

fn criterion_4_penalization_limit() -> bool {
    let started = Instant::now();
    let exp = RunConfig::desk().build().unwrap();
    let target = exp.target.clone().unwrap();
    let z = SpaceTimeField::constant_in_time(&exp.grid, exp.times, &exp.y0).unwrap();
    let ops = StepOperators::from_field(&z, &exp.params, &exp.numerics).unwrap();
    let settings = exp.settings;
    let res = epsilon_continuation(
        &ops,
        &exp.y0,
        &target,
        exp.params.mu,
        exp.params.rho,
        &settings.eps_schedule,
        &settings.inner,
        0.0,
        None,
    )
    .unwrap();
    let trace = &res.trace;
    let monotone = trace.windows(2).all(|w| w[1].violation <= 1.01 * w[0].violation);
    let last = trace.last().unwrap();
    let threshold = 1e-3 * target.measure().sqrt();
    let max_norm = trace.iter().map(|s| s.control_norm).fold(0.0, f64::max);
    let elapsed = started.elapsed();
    for s in trace {
        println!(
            "  eps {:.3e}  J {:.6e}  |u| {:.6e}  violation {:.3e}  newton {}  duality ratio {:.6}",
            s.epsilon, s.value, s.control_norm, s.violation, s.newton_iterations, s.duality_ratio
        );
    }
    let passed = monotone
        && last.epsilon == 1e-6
        && last.violation < threshold
        && max_norm <= 2.0 * baselines::CONTINUATION_CONTROL_NORM
        && elapsed < Duration::from_secs(120);
    report(
        4,
        "penalization limit",
        passed,
        format!(
            "violation {:.3e} < {threshold:.3e} at eps {:.0e}, monotone {monotone}, max |u| {max_norm:.4e}, {:.2}s",
            last.violation,
            last.epsilon,
            elapsed.as_secs_f64()
        ),
    );
    passed
}

fn criterion_5_terminal_mushy_region_covers_target() -> bool {
    let started = Instant::now();
    let exp = RunConfig::desk().build().unwrap();
    let target = exp.target.clone().unwrap();
    let (u, _, rep) = outer_fixed_point(&exp.grid, exp.times, &exp.y0, &target, &exp.params, &exp.settings, &exp.numerics).unwrap();
    let elapsed = started.elapsed();
    let passed = rep.success && rep.final_coverage == 1.0 && elapsed < Duration::from_secs(600);
    report(
        5,
        "end-to-end coverage",
        passed,
        format!(
            "success {}, coverage {}, outer iterations {}, |u| {:.4e}, {:.1}s",
            rep.success,
            rep.final_coverage,
            rep.outer_iterations,
            u.norm(),
            elapsed.as_secs_f64()
        ),
    );
    passed
}

fn criterion_6_pure_phase_regions_follow_the_heat_equation() -> bool {
    let mut config = RunConfig::desk();
    config.physics.alpha = 0.03;
    let exp = config.build().unwrap();
    let target = exp.target.clone().unwrap();
    let (_, y, rep) = outer_fixed_point(&exp.grid, exp.times, &exp.y0, &target, &exp.params, &exp.settings, &exp.numerics).unwrap();
    let margin = config.diagnostics.interior_margin.max(exp.params.lambda);
    let residual = classical_region_residual(&y, &exp.params, margin);
    let base_solid = manufactured_truncation_residual(&exp.grid, exp.times, exp.params.k1).rms;
    let base_liquid = manufactured_truncation_residual(&exp.grid, exp.times, exp.params.k2).rms;
    let solid = residual.solid.map(|r| r.rms);
    let liquid = residual.liquid.map(|r| r.rms);
    let within = |r: Option<f64>, base: f64| r.map_or(true, |v| v <= 5.0 * base);
    let passed = residual.alpha_admissible && within(solid, base_solid) && within(liquid, base_liquid);
    report(
        6,
        "classical regions",
        passed,
        format!(
            "control success {}, solid rms {solid:?} vs 5 x {base_solid:.3e}, liquid rms {liquid:?} vs 5 x {base_liquid:.3e}, \
             transition width {:.3} vs band offset {:.3}",
            rep.success,
            exp.params.flat_value(),
            2.0 * exp.params.lambda.powf(0.25)
        ),
    );
    passed
}

fn criterion_7_invariant_suites() -> bool {
    let report_v = run_verify(&RunConfig::desk(), VerifyOptions::default()).unwrap();
    for c in &report_v.checks {
        println!("  {:<30} {:>12.4e}  threshold {:.1e}  {}", c.name, c.measured, c.threshold, if c.passed { "pass" } else { "FAIL" });
    }
    let corrupt = run_verify(&RunConfig::desk(), VerifyOptions { corrupt_adjoint: true }).unwrap();
    let caught = !corrupt.passed && corrupt.checks.iter().any(|c| c.name.starts_with("duality") && !c.passed);
    let passed = report_v.passed && caught;
    report(
        7,
        "invariant suites",
        passed,
        format!(
            "{} of {} checks pass, corrupted adjoint detected {caught}",
            report_v.checks.iter().filter(|c| c.passed).count(),
            report_v.checks.len()
        ),
    );
    passed
}

fn main() {
    let criteria: [fn() -> bool; 7] = [
        criterion_1_frozen_solver_matches_the_eigenmode,
        criterion_2_discrete_duality,
        criterion_3_gradient_matches_finite_differences,
        criterion_4_penalization_limit,
        criterion_5_terminal_mushy_region_covers_target,
        criterion_6_pure_phase_regions_follow_the_heat_equation,
        criterion_7_invariant_suites,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!("acceptance: {} passed; {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
