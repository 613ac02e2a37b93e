//! Forward solvers: the frozen-coefficient linear map and the nonlinear
//! system by Picard iteration on the coefficient.
//!
//! Each step is backward Euler on cell-centered finite volumes:
//! `(M + dt K_n) y^{n+1} = M y^n + dt B u^n`, where `M` is the diagonal of
//! cell volumes, `K_n` the stiffness built from face coefficients evaluated
//! at `t_n`, and `B` scatters boundary fluxes (times face area) onto the
//! adjacent cells.

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::enthalpy::{mollified_unchecked, EnthalpyParams, MollifierSpec};
use crate::error::{Error, Result};
use crate::grid::{
    l2_norm_space, v_norm, BoundaryControl, BoundaryFace, InteriorFace, SpaceTimeField, SpatialGrid,
    TimeGrid,
};
use crate::linsolve::{pcg, LinearSolver, TridiagonalFactor};

/// Discretization choices shared by every solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Numerics {
    pub mollifier: MollifierSpec,
    pub linear_solver: LinearSolver,
}

impl Numerics {
    pub fn new(dimension: usize) -> Result<Self> {
        Ok(Self {
            mollifier: MollifierSpec::new(dimension, MollifierSpec::DEFAULT_ORDER)?,
            linear_solver: LinearSolver::Auto,
        })
    }
}

/// Slack allowed when checking the coefficient band.
const BAND_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
enum Resolved {
    Tridiagonal,
    Cg { tolerance: f64, max_iterations: usize },
}

/// The step matrices `S_n = M + dt K_n` for every time step.
#[derive(Clone, Debug)]
pub struct StepOperators {
    grid: SpatialGrid,
    times: TimeGrid,
    faces: Vec<InteriorFace>,
    boundary: Vec<BoundaryFace>,
    /// Face coefficients, one row per step.
    coefficients: Vec<f64>,
    /// `dt * coefficient * transmissibility`, one row per step.
    weights: Vec<f64>,
    diagonals: Vec<f64>,
    solver: Resolved,
    factors: Vec<TridiagonalFactor>,
    window_exceeds_horizon: bool,
}

impl StepOperators {
    /// Evaluates `H_lambda(z)` at every cell center and time `t_n`, `n < N`,
    /// and averages neighbouring cells onto faces.
    pub fn from_field(z: &SpaceTimeField, params: &EnthalpyParams, numerics: &Numerics) -> Result<Self> {
        let grid = z.grid();
        let times = z.times();
        let cells = grid.cell_count();
        let centers: Vec<[f64; 2]> = (0..cells).map(|c| grid.cell_center(c)).collect();
        let dim = grid.dimension();
        let spec = &numerics.mollifier;
        if spec.dimension() != dim {
            return Err(Error::config("mollifier", "dimension does not match the grid"));
        }
        let cell_coefficients: Vec<f64> = (0..times.steps())
            .into_par_iter()
            .flat_map_iter(|n| {
                let t = times.time(n);
                centers
                    .iter()
                    .map(move |c| mollified_unchecked(z, t, &c[..dim], params, spec))
            })
            .collect();
        let mut ops = Self::from_cell_coefficients(
            grid,
            times,
            &cell_coefficients,
            numerics.linear_solver,
            Some((params.flat_value(), params.k_star())),
        )?;
        ops.window_exceeds_horizon = params.lambda > times.dt();
        Ok(ops)
    }

    /// Same coefficient `k` on every face and step.
    pub fn uniform(grid: &SpatialGrid, times: TimeGrid, k: f64, solver: LinearSolver) -> Result<Self> {
        let cells = vec![k; grid.cell_count() * times.steps()];
        Self::from_cell_coefficients(grid, times, &cells, solver, None)
    }

    /// Builds the operators from per-cell coefficients (one row per step);
    /// when `band` is given every face coefficient must lie inside it.
    pub fn from_cell_coefficients(
        grid: &SpatialGrid,
        times: TimeGrid,
        cell_coefficients: &[f64],
        solver: LinearSolver,
        band: Option<(f64, f64)>,
    ) -> Result<Self> {
        let cells = grid.cell_count();
        if cell_coefficients.len() != cells * times.steps() {
            return Err(Error::config("coefficients", "one row of cell values per step is required"));
        }
        let faces = grid.interior_faces();
        let boundary = grid.boundary_faces();
        let solver = match solver {
            LinearSolver::Auto if grid.dimension() == 1 => Resolved::Tridiagonal,
            LinearSolver::Auto => Resolved::Cg {
                tolerance: LinearSolver::AUTO_CG_TOLERANCE,
                max_iterations: 20 * cells,
            },
            LinearSolver::Tridiagonal if grid.dimension() == 1 => Resolved::Tridiagonal,
            LinearSolver::Tridiagonal => {
                return Err(Error::config("linear_solver", "tridiagonal elimination needs a 1D grid"))
            }
            LinearSolver::Cg { tolerance, max_iterations } => {
                if !(tolerance > 0.0) || max_iterations == 0 {
                    return Err(Error::config("linear_solver", "CG needs tolerance > 0 and max_iterations >= 1"));
                }
                Resolved::Cg { tolerance, max_iterations }
            }
        };
        let dt = times.dt();
        let vol = grid.cell_volume();
        let mut coefficients = Vec::with_capacity(faces.len() * times.steps());
        let mut weights = Vec::with_capacity(faces.len() * times.steps());
        let mut diagonals = Vec::with_capacity(cells * times.steps());
        let mut factors = Vec::new();
        for n in 0..times.steps() {
            let row = &cell_coefficients[n * cells..(n + 1) * cells];
            let mut diag = vec![vol; cells];
            let mut off = Vec::new();
            for f in &faces {
                let a = 0.5 * (row[f.lower] + row[f.upper]);
                if let Some((lo, hi)) = band {
                    if !(a >= lo - BAND_SLACK && a <= hi + BAND_SLACK) {
                        return Err(Error::Invariant(format!(
                            "face coefficient {a} at step {n} outside [{lo}, {hi}]"
                        )));
                    }
                } else if !(a.is_finite() && a > 0.0) {
                    return Err(Error::Invariant(format!("face coefficient {a} at step {n} is not positive")));
                }
                let w = dt * a * f.transmissibility;
                diag[f.lower] += w;
                diag[f.upper] += w;
                coefficients.push(a);
                weights.push(w);
                off.push(-w);
            }
            if let Resolved::Tridiagonal = solver {
                let factor = TridiagonalFactor::new(&diag, &off).ok_or_else(|| Error::LinearSolve {
                    step: n,
                    reason: "non-positive pivot".into(),
                    iterations: 0,
                    residual: f64::NAN,
                })?;
                factors.push(factor);
            }
            diagonals.extend_from_slice(&diag);
        }
        Ok(Self {
            grid: grid.clone(),
            times,
            faces,
            boundary,
            coefficients,
            weights,
            diagonals,
            solver,
            factors,
            window_exceeds_horizon: false,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> TimeGrid {
        self.times
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    /// Face coefficients used on step `n`.
    pub fn face_coefficients(&self, n: usize) -> &[f64] {
        let m = self.faces.len();
        &self.coefficients[n * m..(n + 1) * m]
    }

    /// Smallest and largest face coefficient over all steps.
    pub fn coefficient_range(&self) -> (f64, f64) {
        self.coefficients
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
    }

    /// True when the averaging window `[t, t + lambda]` passes `T` for some
    /// step (the field is then extended constantly in time).
    pub fn window_exceeds_horizon(&self) -> bool {
        self.window_exceeds_horizon
    }

    /// `out = S_n x`.
    pub fn apply(&self, n: usize, x: &[f64], out: &mut [f64]) {
        let vol = self.grid.cell_volume();
        for (o, v) in out.iter_mut().zip(x) {
            *o = vol * v;
        }
        let m = self.faces.len();
        for (f, w) in self.faces.iter().zip(&self.weights[n * m..(n + 1) * m]) {
            let flux = w * (x[f.lower] - x[f.upper]);
            out[f.lower] += flux;
            out[f.upper] -= flux;
        }
    }

    /// Solves `S_n x = rhs`.
    pub fn solve(&self, n: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        match self.solver {
            Resolved::Tridiagonal => Ok(self.factors[n].solve(rhs)),
            Resolved::Cg { tolerance, max_iterations } => {
                let cells = self.grid.cell_count();
                let diag = &self.diagonals[n * cells..(n + 1) * cells];
                let out = pcg(|x, o| self.apply(n, x, o), diag, rhs, tolerance, max_iterations);
                if !out.converged {
                    return Err(Error::LinearSolve {
                        step: n,
                        reason: "conjugate gradient did not reach tolerance".into(),
                        iterations: out.iterations,
                        residual: out.relative_residual,
                    });
                }
                Ok(out.solution)
            }
        }
    }

    /// Adds `dt * area * u` of step `n` onto the cells adjacent to `Gamma`.
    pub(crate) fn add_boundary_source(&self, u: &BoundaryControl, n: usize, rhs: &mut [f64]) {
        let dt = self.times.dt();
        for (face, flux) in self.boundary.iter().zip(u.step(n)) {
            rhs[face.cell] += dt * face.area * flux;
        }
    }

    pub(crate) fn check_control(&self, u: &BoundaryControl) -> Result<()> {
        if !u.matches(&self.grid, self.times) {
            return Err(Error::config("control", "boundary control does not match the grid"));
        }
        Ok(())
    }
}

/// Runs the forward recursion from `y0` under flux `u`.
pub fn propagate(ops: &StepOperators, y0: &[f64], u: &BoundaryControl) -> Result<SpaceTimeField> {
    let grid = ops.grid();
    grid.check_slice(y0, "y0")?;
    ops.check_control(u)?;
    let times = ops.times();
    let vol = grid.cell_volume();
    let mut y = SpaceTimeField::zeros(grid, times);
    y.level_mut(0).copy_from_slice(y0);
    let mut rhs = vec![0.0; grid.cell_count()];
    for n in 0..times.steps() {
        for (r, v) in rhs.iter_mut().zip(y.level(n)) {
            *r = vol * v;
        }
        ops.add_boundary_source(u, n, &mut rhs);
        let next = ops.solve(n, &rhs)?;
        y.level_mut(n + 1).copy_from_slice(&next);
    }
    if !y.is_finite() {
        return Err(Error::Invariant("forward solve produced non-finite values".into()));
    }
    Ok(y)
}

/// Linear problem with coefficient `H_lambda(z)`.
#[derive(Clone, Debug)]
pub struct FrozenProblem {
    pub z: SpaceTimeField,
    pub u: BoundaryControl,
    pub y0: Vec<f64>,
    pub params: EnthalpyParams,
}

/// `y = Phi(z)`: the solution of the frozen-coefficient problem.
pub fn solve_frozen(prob: &FrozenProblem, numerics: &Numerics) -> Result<SpaceTimeField> {
    let ops = StepOperators::from_field(&prob.z, &prob.params, numerics)?;
    propagate(&ops, &prob.y0, &prob.u)
}

/// Settings of the Picard iteration `z <- (1 - d) z + d Phi(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    pub max_iters: usize,
    /// Relative `L2(Q)` distance between successive iterates.
    pub tol_l2: f64,
    pub damping: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol_l2: 1e-9,
            damping: 1.0,
        }
    }
}

impl PicardSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("picard.max_iters", "must be at least 1"));
        }
        if !(self.tol_l2 > 0.0) {
            return Err(Error::config("picard.tol_l2", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("picard.damping", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// History of a Picard solve.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub final_damping: f64,
    pub window_exceeds_horizon: bool,
}

/// Solves the nonlinear system starting from `z = y0` at every time.
pub fn solve_nonlinear(
    u: &BoundaryControl,
    y0: &[f64],
    params: &EnthalpyParams,
    settings: &PicardSettings,
    numerics: &Numerics,
    grid: &SpatialGrid,
) -> Result<(SpaceTimeField, PicardReport)> {
    let z0 = SpaceTimeField::constant_in_time(grid, u.times(), y0)?;
    solve_nonlinear_from(z0, u, y0, params, settings, numerics)
}

/// Picard iteration from an arbitrary initial iterate.
pub fn solve_nonlinear_from(
    mut z: SpaceTimeField,
    u: &BoundaryControl,
    y0: &[f64],
    params: &EnthalpyParams,
    settings: &PicardSettings,
    numerics: &Numerics,
) -> Result<(SpaceTimeField, PicardReport)> {
    settings.validate()?;
    params.validate()?;
    let mut report = PicardReport {
        final_damping: settings.damping,
        ..Default::default()
    };
    let mut damping = settings.damping;
    let mut rises = 0;
    for iter in 1..=settings.max_iters {
        let ops = StepOperators::from_field(&z, params, numerics)?;
        report.window_exceeds_horizon = ops.window_exceeds_horizon();
        let y = propagate(&ops, y0, u)?;
        let scale = y.l2_norm().max(f64::MIN_POSITIVE);
        let residual = y.l2_distance(&z) / scale;
        debug!("picard iteration {iter}: residual {residual:.3e}, damping {damping}");
        if let Some(&last) = report.residuals.last() {
            rises = if residual > last { rises + 1 } else { 0 };
        }
        report.residuals.push(residual);
        report.iterations = iter;
        if residual <= settings.tol_l2 {
            report.final_damping = damping;
            return Ok((y, report));
        }
        if rises >= 2 {
            damping *= 0.5;
            rises = 0;
            warn!("picard residual rose twice; damping halved to {damping}");
        }
        z = if damping == 1.0 { y } else { z.blend(&y, damping) };
    }
    Err(Error::NonConvergence {
        what: "picard iteration",
        iterations: settings.max_iters,
        residual: report.residuals.last().copied().unwrap_or(f64::NAN),
    })
}

/// Per-step discrete mass balance defect
/// `sum(vol (y^{n+1} - y^n)) - dt sum(area u^n)`.
pub fn mass_balance_defects(y: &SpaceTimeField, u: &BoundaryControl) -> Vec<f64> {
    let grid = y.grid();
    let dt = y.times().dt();
    let vol = grid.cell_volume();
    (0..y.times().steps())
        .map(|n| {
            let change: f64 = y.level(n + 1).iter().zip(y.level(n)).map(|(a, b)| vol * (a - b)).sum();
            let inflow: f64 = u.step(n).iter().zip(u.face_areas()).map(|(f, s)| dt * f * s).sum();
            change - inflow
        })
        .collect()
}

/// Empirical constants of the a priori energy estimates.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// Both sides vanish (zero data).
    pub degenerate: bool,
    /// `max_t [|y(t)|^2 + l^a int_0^t ||y||_V^2] / [|y0|^2 + l^-a ||u||^2]`.
    pub energy_ratio: f64,
    /// `int ||dy/dt||_{V'}^2 / [l^-a (|y0|^2 + l^-a ||u||^2)]`.
    pub derivative_ratio: f64,
}

pub fn energy_report(y: &SpaceTimeField, u: &BoundaryControl, params: &EnthalpyParams) -> Result<EnergyReport> {
    let grid = y.grid();
    let times = y.times();
    let dt = times.dt();
    let la = params.flat_value();
    let y0 = l2_norm_space(grid, y.initial());
    let data = y0 * y0 + u.norm().powi(2) / la;
    if data == 0.0 {
        return Ok(EnergyReport { degenerate: true, energy_ratio: 0.0, derivative_ratio: 0.0 });
    }
    let mut accumulated = 0.0;
    let mut energy_ratio: f64 = y0 * y0 / data;
    for n in 1..=times.steps() {
        let level = y.level(n);
        let v = v_norm(grid, level);
        accumulated += dt * v * v;
        let l2 = l2_norm_space(grid, level);
        energy_ratio = energy_ratio.max((l2 * l2 + la * accumulated) / data);
    }
    // ||g||_{V'}^2 = (M g)^T (M + K_1)^{-1} (M g), with K_1 the unit stiffness
    let unit = StepOperators::uniform(grid, times, 1.0 / dt, LinearSolver::Auto)?;
    let vol = grid.cell_volume();
    let mut derivative = 0.0;
    for n in 0..times.steps() {
        let mg: Vec<f64> = y.level(n + 1).iter().zip(y.level(n)).map(|(a, b)| vol * (a - b) / dt).collect();
        let w = unit.solve(0, &mg)?;
        derivative += dt * mg.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(EnergyReport {
        degenerate: false,
        energy_ratio,
        derivative_ratio: derivative / (data / la),
    })
}

/// Residual statistics over one pure-phase region.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegionResidual {
    /// Root mean square over the space–time points of the region.
    pub rms: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassicalResidual {
    /// `{y <= -2 lambda^(1/4)}`; `None` when empty.
    pub solid: Option<RegionResidual>,
    /// `{y >= rho + 2 lambda^(1/4)}`; `None` when empty.
    pub liquid: Option<RegionResidual>,
    /// `alpha < 1/26`, the regime in which the reduction is expected.
    pub alpha_admissible: bool,
}

/// Discrete Laplacian `(1/vol) sum_faces T (y_j - y_i)` at interior cells.
fn laplacian(grid: &SpatialGrid, faces: &[InteriorFace], y: &[f64]) -> Vec<f64> {
    let vol = grid.cell_volume();
    let mut out = vec![0.0; y.len()];
    for f in faces {
        let flux = f.transmissibility * (y[f.upper] - y[f.lower]);
        out[f.lower] += flux / vol;
        out[f.upper] -= flux / vol;
    }
    out
}

/// Cells whose stencil avoids `Gamma` and whose center is at least `margin`
/// away from it.
pub fn interior_cells(grid: &SpatialGrid, margin: f64) -> Vec<usize> {
    (0..grid.cell_count())
        .filter(|&c| grid.is_interior_cell(c) && grid.distance_to_boundary(c) >= margin)
        .collect()
}

fn accumulate(stats: &mut (f64, f64, usize), r: f64) {
    stats.0 += r * r;
    stats.1 = stats.1.max(r.abs());
    stats.2 += 1;
}

fn finish(stats: (f64, f64, usize)) -> Option<RegionResidual> {
    (stats.2 > 0).then(|| RegionResidual {
        rms: (stats.0 / stats.2 as f64).sqrt(),
        max: stats.1,
        points: stats.2,
    })
}

/// Residual of the pure heat equations `y_t - k Delta y` in the solid and
/// liquid regions, with the backward-Euler stencil of the solver.
pub fn classical_region_residual(
    y: &SpaceTimeField,
    params: &EnthalpyParams,
    interior_margin: f64,
) -> ClassicalResidual {
    let grid = y.grid();
    let dt = y.times().dt();
    let faces = grid.interior_faces();
    let cells = interior_cells(grid, interior_margin.max(params.lambda));
    let band = 2.0 * params.lambda.powf(0.25);
    let mut solid = (0.0, 0.0, 0);
    let mut liquid = (0.0, 0.0, 0);
    for n in 0..y.times().steps() {
        let (prev, next) = (y.level(n), y.level(n + 1));
        let lap = laplacian(grid, &faces, next);
        for &c in &cells {
            let v = next[c];
            let dy = (next[c] - prev[c]) / dt;
            if v <= -band {
                accumulate(&mut solid, dy - params.k1 * lap[c]);
            } else if v >= params.rho + band {
                accumulate(&mut liquid, dy - params.k2 * lap[c]);
            }
        }
    }
    ClassicalResidual {
        solid: finish(solid),
        liquid: finish(liquid),
        alpha_admissible: params.classical_reduction_admissible(),
    }
}

/// Residual of the same stencil applied to the exact Neumann eigenmode
/// `exp(-k (pi/L)^2 t) cos(pi x / L)`: the truncation error of the scheme.
pub fn manufactured_truncation_residual(grid: &SpatialGrid, times: TimeGrid, k: f64) -> RegionResidual {
    let length = grid.extent()[0];
    let wave = std::f64::consts::PI / length;
    let exact = |t: f64| grid.sample(|c| (-k * wave * wave * t).exp() * (wave * c[0]).cos());
    let faces = grid.interior_faces();
    let cells = interior_cells(grid, 0.0);
    let dt = times.dt();
    let mut stats = (0.0, 0.0, 0);
    for n in 0..times.steps() {
        let prev = exact(times.time(n));
        let next = exact(times.time(n + 1));
        let lap = laplacian(grid, &faces, &next);
        for &c in &cells {
            accumulate(&mut stats, (next[c] - prev[c]) / dt - k * lap[c]);
        }
    }
    finish(stats).expect("grid has interior cells")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Side;
    use std::f64::consts::PI;

    fn params() -> EnthalpyParams {
        EnthalpyParams::new(2.0, 1.0, 1.0, 1e-4, 0.25, 0.05).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let g = SpatialGrid::line(1.0, 16).unwrap();
        let times = TimeGrid::new(0.2, 20).unwrap();
        let p = params();
        let y0 = vec![0.4; 16];
        let prob = FrozenProblem {
            z: SpaceTimeField::constant_in_time(&g, times, &y0).unwrap(),
            u: BoundaryControl::zeros(&g, times),
            y0: y0.clone(),
            params: p,
        };
        let y = solve_frozen(&prob, &Numerics::new(1).unwrap()).unwrap();
        for n in 0..times.levels() {
            for v in y.level(n) {
                assert!((v - 0.4).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cosine_mode_decays_at_the_analytic_rate() {
        // solid-branch constant z gives H = k1 = 2 everywhere
        let l = 1.0;
        let g = SpatialGrid::line(l, 256).unwrap();
        let times = TimeGrid::new(0.1, 512).unwrap();
        let p = params();
        let y0 = g.sample(|c| (PI * c[0] / l).cos());
        let prob = FrozenProblem {
            z: SpaceTimeField::constant_in_time(&g, times, &vec![-3.0; 256]).unwrap(),
            u: BoundaryControl::zeros(&g, times),
            y0,
            params: p,
        };
        let y = solve_frozen(&prob, &Numerics::new(1).unwrap()).unwrap();
        let decay = (-2.0 * (PI / l).powi(2) * 0.1).exp();
        let exact = g.sample(|c| decay * (PI * c[0] / l).cos());
        let err: Vec<f64> = y.terminal().iter().zip(&exact).map(|(a, b)| a - b).collect();
        let rel = l2_norm_space(&g, &err) / l2_norm_space(&g, &exact);
        assert!(rel < 0.01, "relative error {rel}");
    }

    #[test]
    fn mass_balance_is_exact_and_2d_cg_works() {
        let g = SpatialGrid::rectangle(1.0, 0.8, 8, 6).unwrap();
        let times = TimeGrid::new(0.1, 10).unwrap();
        let p = params();
        let y0 = g.sample(|c| 2.0 * c[0] - 0.5 + c[1]);
        let u = BoundaryControl::from_fn(&g, times, |t, f| match f.side {
            Side::Left => 3.0 * t,
            Side::Top => -1.0,
            _ => f.center[0] - f.center[1],
        });
        let z = SpaceTimeField::constant_in_time(&g, times, &y0).unwrap();
        let prob = FrozenProblem { z, u: u.clone(), y0, params: p };
        let y = solve_frozen(&prob, &Numerics::new(2).unwrap()).unwrap();
        let worst = mass_balance_defects(&y, &u).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(worst < 1e-10, "mass defect {worst}");
    }

    #[test]
    fn homogeneous_energy_decays() {
        let g = SpatialGrid::line(1.0, 32).unwrap();
        let times = TimeGrid::new(0.05, 25).unwrap();
        let p = params();
        let y0 = g.sample(|c| if c[0] < 0.5 { -1.0 } else { 1.8 });
        let (y, _) = solve_nonlinear(
            &BoundaryControl::zeros(&g, times),
            &y0,
            &p,
            &PicardSettings::default(),
            &Numerics::new(1).unwrap(),
            &g,
        )
        .unwrap();
        for n in 0..times.steps() {
            assert!(l2_norm_space(&g, y.level(n + 1)) <= l2_norm_space(&g, y.level(n)) + 1e-14);
        }
    }

    #[test]
    fn picard_constant_fixed_point_in_one_iteration() {
        let g = SpatialGrid::line(1.0, 16).unwrap();
        let times = TimeGrid::new(0.1, 10).unwrap();
        let (y, report) = solve_nonlinear(
            &BoundaryControl::zeros(&g, times),
            &vec![0.3; 16],
            &params(),
            &PicardSettings::default(),
            &Numerics::new(1).unwrap(),
            &g,
        )
        .unwrap();
        assert_eq!(report.iterations, 1);
        assert!(y.values().iter().all(|v| (v - 0.3).abs() < 1e-14));
    }

    #[test]
    fn solid_branch_nonlinear_matches_constant_coefficient() {
        let g = SpatialGrid::line(1.0, 32).unwrap();
        let times = TimeGrid::new(0.1, 40).unwrap();
        let p = params();
        // max y0 = -0.5 well below -l^a = -0.1, and diffusion keeps it there
        let y0 = g.sample(|c| -1.0 + 0.5 * (PI * c[0]).cos());
        let u = BoundaryControl::zeros(&g, times);
        let settings = PicardSettings { tol_l2: 1e-12, ..Default::default() };
        let (y, _) = solve_nonlinear(&u, &y0, &p, &settings, &Numerics::new(1).unwrap(), &g).unwrap();
        let ops = StepOperators::uniform(&g, times, p.k1, LinearSolver::Auto).unwrap();
        let reference = propagate(&ops, &y0, &u).unwrap();
        assert!(y.l2_distance(&reference) / reference.l2_norm() < 1e-12);
    }

    #[test]
    fn picard_limit_is_independent_of_initial_iterate() {
        let g = SpatialGrid::line(1.0, 24).unwrap();
        let times = TimeGrid::new(0.05, 20).unwrap();
        let p = params();
        let y0 = g.sample(|c| if c[0] < 0.4 { -0.6 } else if c[0] < 0.6 { 0.5 } else { 1.6 });
        let u = BoundaryControl::from_fn(&g, times, |_, f| if f.side == Side::Left { 1.5 } else { 0.0 });
        let settings = PicardSettings { tol_l2: 1e-10, ..Default::default() };
        let numerics = Numerics::new(1).unwrap();
        let (a, _) = solve_nonlinear(&u, &y0, &p, &settings, &numerics, &g).unwrap();
        let other = SpaceTimeField::constant_in_time(&g, times, &vec![3.0; 24]).unwrap();
        let (b, _) = solve_nonlinear_from(other, &u, &y0, &p, &settings, &numerics).unwrap();
        assert!(a.l2_distance(&b) / a.l2_norm() < 10.0 * settings.tol_l2);
    }

    #[test]
    fn energy_report_cases() {
        let g = SpatialGrid::line(2.0, 16).unwrap();
        let times = TimeGrid::new(0.1, 10).unwrap();
        let p = params();
        let u = BoundaryControl::zeros(&g, times);
        let zero = SpaceTimeField::zeros(&g, times);
        assert!(energy_report(&zero, &u, &p).unwrap().degenerate);
        let one = SpaceTimeField::constant_in_time(&g, times, &vec![1.0; 16]).unwrap();
        let r = energy_report(&one, &u, &p).unwrap();
        assert!(!r.degenerate);
        // |y(t)|^2 / |y0|^2 = 1 and the V-norm term adds l^a * t * |Omega| / |Omega|
        assert!(r.energy_ratio >= 1.0 && r.energy_ratio.is_finite());
        assert!((r.energy_ratio - (1.0 + p.flat_value() * 0.1)).abs() < 1e-12);
        assert!(r.derivative_ratio.abs() < 1e-20);
    }

    #[test]
    fn classical_residual_cases() {
        let g = SpatialGrid::line(1.0, 16).unwrap();
        let times = TimeGrid::new(0.1, 10).unwrap();
        let p = params();
        let mushy = SpaceTimeField::constant_in_time(&g, times, &vec![0.5; 16]).unwrap();
        let r = classical_region_residual(&mushy, &p, 1e-4);
        assert!(r.solid.is_none() && r.liquid.is_none());
        let solid = SpaceTimeField::constant_in_time(&g, times, &vec![-1.0; 16]).unwrap();
        let r = classical_region_residual(&solid, &p, 1e-4);
        assert_eq!(r.solid.unwrap().max, 0.0);
        assert!(r.liquid.is_none());
        assert!(!r.alpha_admissible);
    }

    #[test]
    fn coefficient_band_is_respected() {
        let g = SpatialGrid::line(1.0, 32).unwrap();
        let times = TimeGrid::new(0.1, 10).unwrap();
        let p = params();
        let y0 = g.sample(|c| 4.0 * c[0] - 1.5);
        let z = SpaceTimeField::constant_in_time(&g, times, &y0).unwrap();
        let ops = StepOperators::from_field(&z, &p, &Numerics::new(1).unwrap()).unwrap();
        let (lo, hi) = ops.coefficient_range();
        assert!(lo >= p.flat_value() - 1e-12 && hi <= p.k_star() + 1e-12);
        assert!(lo < 0.2 && hi > 1.9);
    }
}
