//! Experiment drivers behind the `simulate`, `control`, `verify` and
//! `sweep` commands. Every run writes its artifacts plus a `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::{
    duality_check, solve_backward, solve_backward_with, terminal_condition, AdjointMode, TerminalPenaltyData,
};
use crate::artifacts::{write_control_csv, write_csv, write_json, write_mask_csv, RunDir};
use crate::baselines;
use crate::config::{RunConfig, SweepMode};
use crate::control::{outer_fixed_point, OuterReport, PenaltyEvaluator};
use crate::enthalpy::EnthalpyParams;
use crate::error::{Error, Result};
use crate::forward::{
    classical_region_residual, energy_report, mass_balance_defects, propagate, solve_nonlinear,
    solve_nonlinear_from, ClassicalResidual, EnergyReport, Numerics, PicardSettings, StepOperators,
};
use crate::grid::{l2_norm_space, write_slice_binary, write_slice_csv, BoundaryControl, Side, SpaceTimeField, SpatialGrid, TimeGrid};
use crate::manufactured::{cosine_mode_error, observed_order};
use crate::mushy::{coverage, hausdorff_distance, holder_normalizer, holder_quotient, mushy_mask, HausdorffDistance, HolderReport, MushyMask, TargetSet, Band};

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    package: &'static str,
    version: &'static str,
    threads: usize,
    seed: u64,
    wall_seconds: f64,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn write_manifest(dir: &RunDir, command: &str, config: &RunConfig, started: Instant) -> Result<()> {
    let mut files: Vec<String> = std::fs::read_dir(dir.root())
        .map_err(|e| Error::io(dir.root(), e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    files.sort();
    let manifest = Manifest {
        command,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        seed: config.seed,
        wall_seconds: started.elapsed().as_secs_f64(),
        files,
        config,
    };
    write_json(&dir.path("manifest.json"), &manifest)
}

fn write_state(dir: &RunDir, name: &str, grid: &SpatialGrid, values: &[f64]) -> Result<()> {
    let csv = dir.path(&format!("{name}.csv"));
    crate::artifacts::write_atomic(&csv, |out| write_slice_csv(grid, values, out))?;
    let bin = dir.path(&format!("{name}.bin"));
    crate::artifacts::write_atomic(&bin, |out| write_slice_binary(grid, values, out))
}

fn mask_rows(masks: &[MushyMask]) -> Vec<Vec<String>> {
    masks
        .iter()
        .flat_map(|m| m.cells().into_iter().map(move |c| vec![m.level.to_string(), c.to_string()]))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSummary {
    pub picard_iterations: usize,
    pub picard_residual: f64,
    pub max_mass_defect: f64,
    pub energy: EnergyReport,
    pub classical: ClassicalResidual,
    pub holder: HolderReport,
    pub holder_normalizer: f64,
    pub target_coverage: Option<f64>,
    pub terminal_mushy_cells: usize,
    pub window_exceeds_horizon: bool,
}

/// Forward-only run under the configured control.
pub fn run_simulate(config: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let started = Instant::now();
    let exp = config.build()?;
    let dir = RunDir::create(out)?;
    let (y, picard) = solve_nonlinear(&exp.control, &exp.y0, &exp.params, &exp.settings.picard, &exp.numerics, &exp.grid)?;
    let steps = exp.times.steps();
    let every = config.diagnostics.snapshot_every;
    for n in 0..=steps {
        if n == 0 || n == steps || (every > 0 && n % every == 0) {
            write_state(&dir, &format!("state_{n:05}"), &exp.grid, y.level(n))?;
        }
    }
    write_state(&dir, "state_final", &exp.grid, y.terminal())?;
    let band = config.diagnostics.band.band(&exp.params);
    let masks: Vec<MushyMask> = (0..=steps).map(|n| mushy_mask(y.level(n), n, band)).collect();
    write_csv(&dir.path("mushy_masks.csv"), &["level", "cell"], &mask_rows(&masks))?;
    let picard_rows: Vec<Vec<String>> = picard
        .residuals
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1).to_string(), format!("{r:e}")])
        .collect();
    write_csv(&dir.path("picard.csv"), &["iter", "residual"], &picard_rows)?;
    let defects = mass_balance_defects(&y, &exp.control);
    let rows: Vec<Vec<String>> = defects.iter().enumerate().map(|(n, d)| vec![n.to_string(), format!("{d:e}")]).collect();
    write_csv(&dir.path("mass_balance.csv"), &["step", "defect"], &rows)?;
    let margin = config.diagnostics.interior_margin.max(exp.params.lambda);
    let summary = SimulateSummary {
        picard_iterations: picard.iterations,
        picard_residual: picard.residuals.last().copied().unwrap_or(0.0),
        max_mass_defect: defects.iter().fold(0.0, |m, d| m.max(d.abs())),
        energy: energy_report(&y, &exp.control, &exp.params)?,
        classical: classical_region_residual(&y, &exp.params, margin),
        holder: holder_quotient(&y, margin, config.diagnostics.holder_samples, config.seed)?,
        holder_normalizer: holder_normalizer(&exp.grid, &exp.y0, &exp.control, &exp.params),
        target_coverage: exp.target.as_ref().map(|t| coverage(t, &masks[steps])),
        terminal_mushy_cells: masks[steps].cells().len(),
        window_exceeds_horizon: picard.window_exceeds_horizon,
    };
    write_json(&dir.path("report.json"), &summary)?;
    write_manifest(&dir, "simulate", config, started)?;
    Ok(summary)
}

/// Outer-loop control run.
pub fn run_control(config: &RunConfig, out: &Path) -> Result<OuterReport> {
    let started = Instant::now();
    let exp = config.build()?;
    let target = exp
        .target
        .clone()
        .ok_or_else(|| Error::config("target", "required by the control command"))?;
    let dir = RunDir::create(out)?;
    let result = outer_fixed_point(&exp.grid, exp.times, &exp.y0, &target, &exp.params, &exp.settings, &exp.numerics);
    let (u, y, report) = match result {
        Ok(r) => r,
        Err(e) => {
            #[derive(Serialize)]
            struct Failure {
                error: String,
            }
            write_json(&dir.path("error.json"), &Failure { error: e.to_string() })?;
            write_manifest(&dir, "control", config, started)?;
            return Err(e);
        }
    };
    write_control_csv(&dir.path("control.csv"), &exp.grid, &u)?;
    write_state(&dir, "state_final", &exp.grid, y.terminal())?;
    let band = exp.settings.band.band(&exp.params);
    write_mask_csv(&dir.path("mushy_mask_T.csv"), &exp.grid, &mushy_mask(y.terminal(), exp.times.steps(), band))?;
    let mut rows = Vec::new();
    for r in &report.records {
        for s in &r.stages {
            rows.push(vec![
                r.iteration.to_string(),
                format!("{:e}", s.epsilon),
                s.newton_iterations.to_string(),
                format!("{:e}", s.value),
                format!("{:e}", s.grad_norm),
                format!("{:e}", s.violation),
                format!("{}", r.coverage),
            ]);
        }
    }
    write_csv(
        &dir.path("optimization_log.csv"),
        &["outer_iter", "eps", "inner_iters", "J", "grad_norm", "violation", "coverage"],
        &rows,
    )?;
    write_json(&dir.path("report.json"), &report)?;
    write_manifest(&dir, "control", config, started)?;
    Ok(report)
}

/// One entry of the verify report.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, passed: measured <= threshold }
    }

    fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold, passed: measured >= threshold }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Negative control: run the duality probes with a mismatched adjoint.
    pub corrupt_adjoint: bool,
}

/// Field that varies in space and time, crossing the mushy band.
fn probe_field(grid: &SpatialGrid, times: TimeGrid, params: &EnthalpyParams) -> SpaceTimeField {
    let mut z = SpaceTimeField::zeros(grid, times);
    let span = params.rho + 2.0;
    for n in 0..times.levels() {
        let t = times.time(n) / times.horizon();
        let slice = grid.sample(|c| {
            let s = c[0] / grid.extent()[0] + 0.3 * c[1];
            -1.0 + span * s + 0.3 * t
        });
        z.level_mut(n).copy_from_slice(&slice);
    }
    z
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Largest duality residual over `probes` random `(y0, u, pT)`.
pub fn duality_probes(ops: &StepOperators, probes: usize, seed: u64, mode: AdjointMode) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = ops.grid();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let y0 = random_vec(&mut rng, grid.cell_count());
        let p_t = random_vec(&mut rng, grid.cell_count());
        let u = BoundaryControl::from_fn(grid, ops.times(), |_, _| rng.gen_range(-1.0..1.0));
        let y = propagate(ops, &y0, &u)?;
        let p = solve_backward_with(ops, &p_t, mode)?;
        worst = worst.max(duality_check(ops, &y, &u, &p));
    }
    Ok(worst)
}

/// Largest relative mismatch between the adjoint gradient and central
/// differences of `J` over random directions.
pub fn gradient_probes(eval: &PenaltyEvaluator, u: &BoundaryControl, directions: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = eval.gradient(u)?;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d = BoundaryControl::from_fn(eval.ops().grid(), u.times(), |_, _| rng.gen_range(-1.0..1.0));
        let exact = g.inner(&d);
        // J is quadratic away from kinks, so a moderate step leaves only round-off
        let h = 1e-3 * u.norm().max(1.0) / d.norm();
        let mut plus = u.clone();
        plus.axpy(h, &d);
        let mut minus = u.clone();
        minus.axpy(-h, &d);
        let fd = (eval.value(&plus)? - eval.value(&minus)?) / (2.0 * h);
        worst = worst.max((fd - exact).abs() / (exact.abs() + 1e-14));
    }
    Ok(worst)
}

fn brute_hausdorff(grid: &SpatialGrid, a: &[usize], b: &[usize]) -> f64 {
    let d = |i: usize, j: usize| {
        let (p, q) = (grid.cell_center(i), grid.cell_center(j));
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    let dir = |x: &[usize], y: &[usize]| x.iter().map(|&i| y.iter().map(|&j| d(i, j)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    dir(a, b).max(dir(b, a))
}

/// Mushy set, coverage and Hausdorff distance against enumeration on random
/// instances with at most 32 cells; returns the number of mismatches.
pub fn mushy_oracle_mismatches(cases: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for case in 0..cases {
        let grid = if case % 2 == 0 { SpatialGrid::line(1.0, 32)? } else { SpatialGrid::rectangle(1.0, 1.0, 4, 8)? };
        let n = grid.cell_count();
        let values = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect::<Vec<f64>>();
        let band = Band { lo: rng.gen_range(-0.5..0.2), hi: rng.gen_range(0.5..1.5) };
        let mask = mushy_mask(&values, 0, band);
        let members: Vec<usize> = (0..n).filter(|&c| values[c] >= band.lo && values[c] <= band.hi).collect();
        if mask.cells() != members {
            mismatches += 1;
        }
        let tmask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        if let Ok(target) = TargetSet::from_mask(&grid, tmask.clone()) {
            let in_target = (0..n).filter(|&c| tmask[c]).count();
            let hit = (0..n).filter(|&c| tmask[c] && members.contains(&c)).count();
            if (coverage(&target, &mask) - hit as f64 / in_target as f64).abs() > 1e-15 {
                mismatches += 1;
            }
        }
        let other: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let other_cells: Vec<usize> = (0..n).filter(|&c| other[c]).collect();
        let b = MushyMask { level: 0, mask: other };
        match hausdorff_distance(&grid, &mask, &b) {
            Ok(HausdorffDistance::Finite(d)) => {
                if (d - brute_hausdorff(&grid, &members, &other_cells)).abs() > 1e-14 {
                    mismatches += 1;
                }
            }
            Ok(HausdorffDistance::Infinite) => {
                if members.is_empty() == other_cells.is_empty() {
                    mismatches += 1;
                }
            }
            Err(_) => {
                if !(members.is_empty() && other_cells.is_empty()) {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(mismatches)
}

/// Diagnostics of the nominal run behind the stored baselines: the desk
/// instance under a constant inflow of 2 on the left.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NominalDiagnostics {
    pub energy_ratio: f64,
    pub derivative_ratio: f64,
    pub holder_quotient: f64,
}

pub fn nominal_config() -> RunConfig {
    let mut c = RunConfig::desk();
    c.control = crate::config::ControlSpec::Constant { left: 2.0, right: 0.0, bottom: 0.0, top: 0.0 };
    c
}

pub fn nominal_diagnostics() -> Result<NominalDiagnostics> {
    let config = nominal_config();
    let exp = config.build()?;
    let (y, _) = solve_nonlinear(&exp.control, &exp.y0, &exp.params, &exp.settings.picard, &exp.numerics, &exp.grid)?;
    let energy = energy_report(&y, &exp.control, &exp.params)?;
    let margin = config.diagnostics.interior_margin;
    let holder = holder_quotient(&y, margin, config.diagnostics.holder_samples, 0)?;
    Ok(NominalDiagnostics {
        energy_ratio: energy.energy_ratio,
        derivative_ratio: energy.derivative_ratio,
        holder_quotient: holder.quotient,
    })
}

/// Runs every invariant suite. Failures are report entries, not errors.
pub fn run_verify(config: &RunConfig, options: VerifyOptions) -> Result<VerifyReport> {
    let exp = config.build()?;
    let p = exp.params;
    let v = &config.verify;
    let mut checks = Vec::new();
    let horizon = exp.times.horizon();

    // forward solver on the configured instance with a nonzero flux
    let flux = BoundaryControl::from_fn(&exp.grid, exp.times, |_, f| match f.side {
        Side::Left | Side::Bottom => 1.0,
        _ => -0.5,
    });
    let (y, _) = solve_nonlinear(&flux, &exp.y0, &p, &exp.settings.picard, &exp.numerics, &exp.grid)?;
    let ops = StepOperators::from_field(&y, &p, &exp.numerics)?;
    let (lo, hi) = ops.coefficient_range();
    let band_excess = (p.flat_value() - lo).max(hi - p.k_star()).max(0.0);
    checks.push(Check::at_most("coefficient_band_excess", band_excess, 1e-12));
    let defect = mass_balance_defects(&y, &flux).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    checks.push(Check::at_most("mass_balance_defect", defect, 1e-10));

    let zero = BoundaryControl::zeros(&exp.grid, exp.times);
    let (y_free, _) = solve_nonlinear(&zero, &exp.y0, &p, &exp.settings.picard, &exp.numerics, &exp.grid)?;
    let growth = (0..exp.times.steps())
        .map(|n| l2_norm_space(&exp.grid, y_free.level(n + 1)) - l2_norm_space(&exp.grid, y_free.level(n)))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("energy_dissipation_growth", growth, 1e-12 * l2_norm_space(&exp.grid, &exp.y0).max(1.0)));

    // small 1D instances at the verify resolution
    let small = SpatialGrid::line(exp.grid.extent()[0], v.cells)?;
    let small_times = TimeGrid::new(horizon, v.steps)?;
    let numerics1 = Numerics { mollifier: crate::enthalpy::MollifierSpec::new(1, config.solver.quadrature_order)?, linear_solver: crate::linsolve::LinearSolver::Auto };
    let y0_small = small.sample(|c| {
        let s = c[0] / small.extent()[0];
        if s < 0.4 { -0.8 } else if s < 0.6 { 0.5 } else { p.rho + 0.8 }
    });
    let picard = PicardSettings { tol_l2: 1e-10, ..exp.settings.picard };
    let inflow = BoundaryControl::from_fn(&small, small_times, |_, f| if f.side == Side::Left { 1.0 } else { 0.0 });
    let (a, _) = solve_nonlinear(&inflow, &y0_small, &p, &picard, &numerics1, &small)?;
    let other = SpaceTimeField::constant_in_time(&small, small_times, &vec![p.rho + 1.0; v.cells])?;
    let (b, _) = solve_nonlinear_from(other, &inflow, &y0_small, &p, &picard, &numerics1)?;
    checks.push(Check::at_most("picard_uniqueness", a.l2_distance(&b) / a.l2_norm(), 10.0 * picard.tol_l2));

    let mode = if options.corrupt_adjoint { AdjointMode::Mismatched } else { AdjointMode::Transpose };
    let ops1 = StepOperators::from_field(&probe_field(&small, small_times, &p), &p, &numerics1)?;
    checks.push(Check::at_most("duality_1d", duality_probes(&ops1, v.probes, config.seed, mode)?, 1e-9));
    let square = SpatialGrid::rectangle(1.0, 1.0, 8, 8)?;
    let numerics2 = Numerics::new(2)?;
    let ops2 = StepOperators::from_field(&probe_field(&square, small_times, &p), &p, &numerics2)?;
    checks.push(Check::at_most("duality_2d", duality_probes(&ops2, v.probes, config.seed + 1, mode)?, 1e-9));
    let constant = solve_backward(&ops1, &vec![1.0; v.cells])?;
    let drift = constant.values().iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs()));
    checks.push(Check::at_most("adjoint_constant_mode", drift, 1e-12));

    let target = TargetSet::from_boxes(&small, &[[0.4 * small.extent()[0], 0.6 * small.extent()[0], 0.0, 0.0]])?;
    let data = TerminalPenaltyData::new(1e-2, target, p.mu, p.rho)?;
    let slope_err = [(-p.mu - 0.3, -1.0), (p.rho * 0.5, 0.0), (p.rho + p.mu + 0.3, -1.0)]
        .iter()
        .map(|&(x, s)| {
            let h = 1e-7;
            let c = data.target.cells().next().expect("target nonempty");
            let f = |v: f64| terminal_condition(&vec![v; small.cell_count()], &data)[c];
            ((f(x + h) - f(x - h)) / (2.0 * h) - s / data.epsilon).abs() * data.epsilon
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("terminal_condition_slopes", slope_err, 1e-6));
    let eval = PenaltyEvaluator::new(&ops1, &y0_small, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed + 2);
    let u = BoundaryControl::from_fn(&small, small_times, |_, _| rng.gen_range(0.0..4.0));
    checks.push(Check::at_most("gradient_fd", gradient_probes(&eval, &u, 5, config.seed + 3)?, 1e-6));

    // manufactured solution orders
    let cells = [32usize, 64, 128];
    let h_errors: Vec<f64> = cells
        .iter()
        .map(|&n| cosine_mode_error(1.0, n, 0.1, n * n / 32, p.k1))
        .collect::<Result<_>>()?;
    let hs: Vec<f64> = cells.iter().map(|&n| 1.0 / n as f64).collect();
    checks.push(Check::at_least("manufactured_order_h", observed_order(&hs, &h_errors), 1.8));
    let steps = [16usize, 32, 64];
    let dt_errors: Vec<f64> = steps
        .iter()
        .map(|&n| cosine_mode_error(1.0, 512, 0.1, n, p.k1))
        .collect::<Result<_>>()?;
    let dts: Vec<f64> = steps.iter().map(|&n| 0.1 / n as f64).collect();
    checks.push(Check::at_least("manufactured_order_dt", observed_order(&dts, &dt_errors), 0.9));

    let nominal = nominal_diagnostics()?;
    checks.push(Check::at_most("energy_ratio_vs_baseline", nominal.energy_ratio, 2.0 * baselines::ENERGY_RATIO));
    checks.push(Check::at_most("derivative_ratio_vs_baseline", nominal.derivative_ratio, 2.0 * baselines::DERIVATIVE_RATIO));
    checks.push(Check::at_most("holder_quotient_vs_baseline", nominal.holder_quotient, 2.0 * baselines::HOLDER_QUOTIENT));
    let free_ratio = energy_report(&y_free, &zero, &p)?.energy_ratio;
    checks.push(Check::at_most("energy_ratio_finite", if free_ratio.is_finite() { 0.0 } else { 1.0 }, 0.0));

    checks.push(Check::at_most("mushy_oracle_mismatches", mushy_oracle_mismatches(200, config.seed)? as f64, 0.0));

    for c in &checks {
        info!("{:<28} {:>12.4e} (threshold {:.1e}) {}", c.name, c.measured, c.threshold, if c.passed { "pass" } else { "FAIL" });
    }
    Ok(VerifyReport { passed: checks.iter().all(|c| c.passed), checks })
}

/// Verify run that writes `verify.json` and the manifest.
pub fn run_verify_to(config: &RunConfig, out: &Path, options: VerifyOptions) -> Result<VerifyReport> {
    let started = Instant::now();
    let report = run_verify(config, options)?;
    let dir = RunDir::create(out)?;
    write_json(&dir.path("verify.json"), &report)?;
    write_manifest(&dir, "verify", config, started)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub ok: bool,
    pub error: Option<String>,
    pub success: Option<bool>,
    pub coverage: Option<f64>,
    pub control_norm: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub energy_ratio: Option<f64>,
    pub manufactured_error: Option<f64>,
    pub directory: PathBuf,
}

fn sweep_row(config: &RunConfig, mode: SweepMode, value: f64, dir: PathBuf) -> SweepRow {
    let mut row = SweepRow {
        value,
        ok: true,
        error: None,
        success: None,
        coverage: None,
        control_norm: None,
        outer_iterations: None,
        energy_ratio: None,
        manufactured_error: None,
        directory: dir.clone(),
    };
    let result = (|| -> Result<()> {
        match mode {
            SweepMode::Control => {
                let r = run_control(config, &dir)?;
                row.success = Some(r.success);
                row.coverage = Some(r.final_coverage);
                row.control_norm = Some(r.control_norm);
                row.outer_iterations = Some(r.outer_iterations);
            }
            SweepMode::Simulate => {
                let s = run_simulate(config, &dir)?;
                row.energy_ratio = Some(s.energy.energy_ratio);
                row.coverage = s.target_coverage;
            }
            SweepMode::Manufactured => {
                let p = &config.problem;
                let e = cosine_mode_error(p.extent[0], p.cells[0], p.horizon, p.steps, config.physics.k1)?;
                row.manufactured_error = Some(e);
                let d = RunDir::create(&dir)?;
                write_json(&d.path("report.json"), &e)?;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.ok = false;
        row.error = Some(e.to_string());
    }
    row
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Repeats a run per value of the configured axis; rows run in parallel,
/// each in its own subdirectory. Failed rows are marked, not fatal.
pub fn run_sweep(config: &RunConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let started = Instant::now();
    config.validate()?;
    let sweep = config.sweep.clone().ok_or_else(|| Error::config("sweep", "required by the sweep command"))?;
    let dir = RunDir::create(out)?;
    let rows: Vec<SweepRow> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let sub = dir.path(&format!("row_{i:03}"));
            match config.with_axis(sweep.axis, value) {
                Ok(c) => sweep_row(&c, sweep.mode, value, sub),
                Err(e) => SweepRow {
                    value,
                    ok: false,
                    error: Some(e.to_string()),
                    success: None,
                    coverage: None,
                    control_norm: None,
                    outer_iterations: None,
                    energy_ratio: None,
                    manufactured_error: None,
                    directory: sub,
                },
            }
        })
        .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{:e}", r.value),
                if r.ok { "ok".into() } else { "failed".into() },
                opt(&r.success),
                opt(&r.coverage),
                opt(&r.control_norm),
                opt(&r.outer_iterations),
                opt(&r.energy_ratio),
                opt(&r.manufactured_error),
            ]
        })
        .collect();
    write_csv(
        &dir.path("sweep.csv"),
        &["value", "status", "success", "coverage", "control_norm", "outer_iterations", "energy_ratio", "manufactured_error"],
        &table,
    )?;
    write_json(&dir.path("sweep.json"), &rows)?;
    write_manifest(&dir, "sweep", config, started)?;
    Ok(rows)
}
