//! Penalized boundary control for frozen coefficients, epsilon continuation
//! and the outer fixed-point loop over the coefficient field.
//!
//! For fixed `z` the state is affine in `u`, so
//! `J(u) = 1/2 ||u||^2 + 1/(2 eps) int_target dist(y(T), band)^2`
//! is convex and piecewise quadratic. It is minimized by a semismooth Newton
//! iteration whose steps solve `(I + (1/eps) L^T 1_A L) s = -grad J` by
//! conjugate gradients, `A` being the target cells where `y(T)` leaves the band.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::adjoint::{
    boundary_trace, solve_backward, terminal_condition, terminal_violation, TerminalPenaltyData, TerminalViolation,
};
use crate::enthalpy::EnthalpyParams;
use crate::error::{Error, Result};
use crate::forward::{propagate, solve_nonlinear, Numerics, PicardReport, PicardSettings, StepOperators};
use crate::grid::{l2_norm_space, BoundaryControl, SpaceTimeField, SpatialGrid, TimeGrid};
use crate::mushy::{coverage, mushy_mask, Band, TargetSet};

/// Geometric schedule `eps0, eps0 f, eps0 f^2, ...` clipped at `floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub factor: f64,
    pub floor: f64,
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self { eps0: 1.0, factor: 0.25, floor: 1e-6 }
    }
}

impl EpsSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(Error::config("eps_schedule.eps0", "must be positive"));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::config("eps_schedule.factor", "must lie in (0, 1)"));
        }
        if !(self.floor > 0.0 && self.floor <= self.eps0) {
            return Err(Error::config("eps_schedule.floor", "must lie in (0, eps0]"));
        }
        Ok(())
    }

    pub fn stages(&self) -> Vec<f64> {
        let mut out = vec![self.eps0];
        let mut eps = self.eps0;
        while eps > self.floor {
            eps = (eps * self.factor).max(self.floor);
            out.push(eps);
        }
        out
    }
}

/// Inner minimization settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerSettings {
    /// Newton iterations.
    pub max_iters: usize,
    /// Stop when `||grad J|| <= tol_grad max(1, ||u||)`.
    pub tol_grad: f64,
    /// Conjugate-gradient iterations per Newton step.
    pub max_cg: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self { max_iters: 60, tol_grad: 1e-8, max_cg: 500 }
    }
}

impl InnerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("inner.max_iters", "must be at least 1"));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::config("inner.tol_grad", "must be positive"));
        }
        if self.max_cg == 0 {
            return Err(Error::config("inner.max_cg", "must be at least 1"));
        }
        Ok(())
    }
}

/// Which band defines the mushy set used for coverage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `[-mu, rho + mu]`
    #[default]
    Mu,
    /// `[-2 mu, rho + 2 mu]`
    TwoMu,
    /// `[-2 lambda^(1/4), rho + 2 lambda^(1/4)]`
    QuarterPower,
}

impl BandKind {
    pub fn band(&self, params: &EnthalpyParams) -> Band {
        match self {
            Self::Mu => Band::mu(params),
            Self::TwoMu => Band::two_mu(params),
            Self::QuarterPower => Band::quarter_power(params),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopSettings {
    pub max_outer: usize,
    /// Relative `L2(Q)` change of `z` at which the loop is stagnant.
    pub tol_outer: f64,
    pub eps_schedule: EpsSchedule,
    pub inner: InnerSettings,
    pub relaxation: f64,
    /// Continuation stops early once the terminal violation is at most this.
    pub violation_tol: f64,
    /// Fraction of `mu` removed from the penalized band, so that the
    /// penalized state lands inside the coverage band with room to spare.
    pub penalty_margin: f64,
    pub band: BandKind,
    /// Filled from the solver settings of the run.
    #[serde(skip)]
    pub picard: PicardSettings,
}

impl Default for OuterLoopSettings {
    fn default() -> Self {
        Self {
            max_outer: 100,
            tol_outer: 1e-5,
            eps_schedule: EpsSchedule::default(),
            inner: InnerSettings::default(),
            relaxation: 1.0,
            violation_tol: 0.0,
            penalty_margin: 0.5,
            band: BandKind::Mu,
            picard: PicardSettings::default(),
        }
    }
}

impl OuterLoopSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 {
            return Err(Error::config("optimizer.max_outer", "must be at least 1"));
        }
        if !(self.tol_outer > 0.0) {
            return Err(Error::config("optimizer.tol_outer", "must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::config("optimizer.relaxation", "must lie in (0, 1]"));
        }
        if !(self.violation_tol >= 0.0) {
            return Err(Error::config("optimizer.violation_tol", "must be non-negative"));
        }
        if !(self.penalty_margin >= 0.0 && self.penalty_margin < 1.0) {
            return Err(Error::config("optimizer.penalty_margin", "must lie in [0, 1)"));
        }
        self.eps_schedule.validate()?;
        self.inner.validate()?;
        self.picard.validate()
    }
}

/// Penalized problem with coefficient frozen at `H_lambda(z)`.
#[derive(Clone, Debug)]
pub struct PenalizedProblem {
    pub z: SpaceTimeField,
    pub y0: Vec<f64>,
    pub target: TargetSet,
    pub epsilon: f64,
    pub params: EnthalpyParams,
}

impl PenalizedProblem {
    fn data(&self) -> Result<TerminalPenaltyData> {
        TerminalPenaltyData::new(self.epsilon, self.target.clone(), self.params.mu, self.params.rho)
    }
}

/// Evaluates `J`, its gradient and generalized Hessian products for one
/// set of frozen operators.
pub struct PenaltyEvaluator<'a> {
    ops: &'a StepOperators,
    y0: &'a [f64],
    data: TerminalPenaltyData,
}

impl<'a> PenaltyEvaluator<'a> {
    pub fn new(ops: &'a StepOperators, y0: &'a [f64], data: TerminalPenaltyData) -> Result<Self> {
        ops.grid().check_slice(y0, "y0")?;
        if data.target.mask().len() != ops.grid().cell_count() {
            return Err(Error::config("target", "target does not match the grid"));
        }
        Ok(Self { ops, y0, data })
    }

    pub fn data(&self) -> &TerminalPenaltyData {
        &self.data
    }

    pub fn ops(&self) -> &StepOperators {
        self.ops
    }

    pub fn state(&self, u: &BoundaryControl) -> Result<SpaceTimeField> {
        propagate(self.ops, self.y0, u)
    }

    /// `J` given the terminal state of `u`.
    pub fn value_at(&self, u: &BoundaryControl, y_t: &[f64]) -> f64 {
        let vol = self.ops.grid().cell_volume();
        let penalty: f64 = self.data.target.cells().map(|c| vol * self.data.excess(y_t[c]).powi(2)).sum();
        0.5 * u.norm().powi(2) + 0.5 * penalty / self.data.epsilon
    }

    pub fn value(&self, u: &BoundaryControl) -> Result<f64> {
        let y = self.state(u)?;
        Ok(self.value_at(u, y.terminal()))
    }

    /// Returns `grad J = u - p|Sigma` and the adjoint `p`.
    pub fn gradient_at(&self, u: &BoundaryControl, y_t: &[f64]) -> Result<(BoundaryControl, SpaceTimeField)> {
        let p = solve_backward(self.ops, &terminal_condition(y_t, &self.data))?;
        let mut g = u.clone();
        g.axpy(-1.0, &boundary_trace(self.ops, &p));
        Ok((g, p))
    }

    pub fn gradient(&self, u: &BoundaryControl) -> Result<BoundaryControl> {
        let y = self.state(u)?;
        Ok(self.gradient_at(u, y.terminal())?.0)
    }

    /// `v + trace(backward((1/eps) 1_A L v))`.
    fn hessian_apply(&self, active: &[bool], v: &BoundaryControl) -> Result<BoundaryControl> {
        let zeros = vec![0.0; self.y0.len()];
        let dy = propagate(self.ops, &zeros, v)?;
        let p_t: Vec<f64> = dy
            .terminal()
            .iter()
            .zip(active)
            .map(|(d, &a)| if a { d / self.data.epsilon } else { 0.0 })
            .collect();
        let p = solve_backward(self.ops, &p_t)?;
        let mut out = v.clone();
        out.axpy(1.0, &boundary_trace(self.ops, &p));
        Ok(out)
    }

    fn active_set(&self, y_t: &[f64]) -> Vec<bool> {
        y_t.iter()
            .zip(self.data.target.mask())
            .map(|(&v, &t)| t && self.data.excess(v) != 0.0)
            .collect()
    }

    pub fn violation(&self, y_t: &[f64]) -> TerminalViolation {
        terminal_violation(y_t, &self.data, self.ops.grid().cell_volume())
    }
}

/// `J(u)` for the frozen problem.
pub fn penalty_functional(u: &BoundaryControl, prob: &PenalizedProblem, numerics: &Numerics) -> Result<f64> {
    let ops = StepOperators::from_field(&prob.z, &prob.params, numerics)?;
    PenaltyEvaluator::new(&ops, &prob.y0, prob.data()?)?.value(u)
}

/// `grad J(u) = u - p|Sigma`.
pub fn gradient(u: &BoundaryControl, prob: &PenalizedProblem, numerics: &Numerics) -> Result<BoundaryControl> {
    let ops = StepOperators::from_field(&prob.z, &prob.params, numerics)?;
    PenaltyEvaluator::new(&ops, &prob.y0, prob.data()?)?.gradient(u)
}

#[derive(Clone, Debug)]
pub struct PenalizedSolution {
    pub u: BoundaryControl,
    pub y: SpaceTimeField,
    /// Adjoint at the returned control.
    pub p: SpaceTimeField,
    pub value: f64,
    pub grad_norm: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    /// False when the iteration stopped before the gradient tolerance; the
    /// best iterate is returned.
    pub converged: bool,
    /// `J` at every accepted iterate.
    pub history: Vec<f64>,
}

/// Conjugate gradients for `H s = rhs` in the `L2(Sigma)` inner product.
fn cg_controls<F>(apply: F, rhs: &BoundaryControl, tol: f64, max_iter: usize) -> Result<(BoundaryControl, usize)>
where
    F: Fn(&BoundaryControl) -> Result<BoundaryControl>,
{
    let mut x = rhs.scaled(0.0);
    let mut r = rhs.clone();
    let mut d = r.clone();
    let mut rr = r.inner(&r);
    let stop = tol * rr.sqrt();
    for it in 0..max_iter {
        if rr.sqrt() <= stop {
            return Ok((x, it));
        }
        let hd = apply(&d)?;
        let curvature = d.inner(&hd);
        if !(curvature > 0.0) {
            return Ok((x, it));
        }
        let a = rr / curvature;
        x.axpy(a, &d);
        r.axpy(-a, &hd);
        let next = r.inner(&r);
        d.scale(next / rr);
        d.axpy(1.0, &r);
        rr = next;
    }
    Ok((x, max_iter))
}

/// Minimizes `J` from the starting control `start`.
pub fn minimize(eval: &PenaltyEvaluator, start: BoundaryControl, settings: &InnerSettings) -> Result<PenalizedSolution> {
    settings.validate()?;
    let mut u = start;
    let mut y = eval.state(&u)?;
    let mut value = eval.value_at(&u, y.terminal());
    let mut history = vec![value];
    let mut cg_total = 0;
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut p) = eval.gradient_at(&u, y.terminal())?;
    loop {
        let grad_norm = g.norm();
        if grad_norm <= settings.tol_grad * u.norm().max(1.0) {
            converged = true;
            break;
        }
        if iterations == settings.max_iters {
            break;
        }
        iterations += 1;
        let active = eval.active_set(y.terminal());
        let forcing = (0.1f64).min(grad_norm.sqrt()).max(1e-3 * settings.tol_grad);
        let (step, used) = cg_controls(|v| eval.hessian_apply(&active, v), &g.scaled(-1.0), forcing, settings.max_cg)?;
        cg_total += used;
        let slope = g.inner(&step);
        if !(slope < 0.0) {
            warn!("newton step is not a descent direction; stopping");
            break;
        }
        let mut t = 1.0;
        let accepted = loop {
            let mut trial = u.clone();
            trial.axpy(t, &step);
            let y_trial = eval.state(&trial)?;
            let v_trial = eval.value_at(&trial, y_trial.terminal());
            if v_trial <= value + 1e-4 * t * slope {
                break Some((trial, y_trial, v_trial));
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        let Some((trial, y_trial, v_trial)) = accepted else {
            warn!("line search stagnated at J = {value:.6e}");
            break;
        };
        debug!("newton {iterations}: J {v_trial:.6e}, |g| {grad_norm:.3e}, cg {used}, t {t}");
        u = trial;
        y = y_trial;
        value = v_trial;
        history.push(value);
        (g, p) = eval.gradient_at(&u, y.terminal())?;
    }
    Ok(PenalizedSolution {
        grad_norm: g.norm(),
        u,
        y,
        p,
        value,
        newton_iterations: iterations,
        cg_iterations: cg_total,
        converged,
        history,
    })
}

/// Minimizes the penalized functional of `prob` starting from `u = 0`.
pub fn solve_penalized(prob: &PenalizedProblem, settings: &InnerSettings, numerics: &Numerics) -> Result<PenalizedSolution> {
    let ops = StepOperators::from_field(&prob.z, &prob.params, numerics)?;
    let eval = PenaltyEvaluator::new(&ops, &prob.y0, prob.data()?)?;
    minimize(&eval, BoundaryControl::zeros(ops.grid(), ops.times()), settings)
}

/// One epsilon stage of the continuation.
#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub epsilon: f64,
    pub value: f64,
    pub control_norm: f64,
    /// `||(y(T)+mu)^-|| + ||(y(T)-rho-mu)^+||` on the target.
    pub violation: f64,
    pub violation_below: f64,
    pub violation_above: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// `(||u||^2 + viol^2 / eps) / (|p(0)| |y0|)`, at most 1 up to round-off.
    pub duality_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub u: BoundaryControl,
    pub y: SpaceTimeField,
    pub trace: Vec<StageRecord>,
}

/// Solves the penalized problems along the schedule, warm-starting each
/// stage from the previous control.
pub fn epsilon_continuation(
    ops: &StepOperators,
    y0: &[f64],
    target: &TargetSet,
    mu: f64,
    rho: f64,
    schedule: &EpsSchedule,
    inner: &InnerSettings,
    violation_tol: f64,
    warm: Option<BoundaryControl>,
) -> Result<ContinuationResult> {
    schedule.validate()?;
    let grid = ops.grid();
    let mut u = warm.unwrap_or_else(|| BoundaryControl::zeros(grid, ops.times()));
    let mut trace = Vec::new();
    let mut y = None;
    let y0_norm = l2_norm_space(grid, y0);
    for eps in schedule.stages() {
        let data = TerminalPenaltyData::new(eps, target.clone(), mu, rho)?;
        let eval = PenaltyEvaluator::new(ops, y0, data)?;
        let sol = minimize(&eval, u, inner)?;
        let v = eval.violation(sol.y.terminal());
        let control_norm = sol.u.norm();
        let p0 = l2_norm_space(grid, sol.p.initial());
        let lhs = control_norm.powi(2) + (v.below.powi(2) + v.above.powi(2)) / eps;
        let duality_ratio = if lhs == 0.0 { 0.0 } else { lhs / (p0 * y0_norm) };
        info!(
            "eps {eps:.3e}: J {:.6e}, |u| {control_norm:.4e}, violation {:.3e}, newton {}",
            sol.value,
            v.sum(),
            sol.newton_iterations
        );
        if !sol.converged {
            warn!("penalized solve at eps {eps:.3e} stopped with |grad| {:.3e}", sol.grad_norm);
        }
        trace.push(StageRecord {
            epsilon: eps,
            value: sol.value,
            control_norm,
            violation: v.sum(),
            violation_below: v.below,
            violation_above: v.above,
            newton_iterations: sol.newton_iterations,
            cg_iterations: sol.cg_iterations,
            grad_norm: sol.grad_norm,
            converged: sol.converged,
            duality_ratio,
        });
        u = sol.u;
        y = Some(sol.y);
        if v.sum() <= violation_tol {
            break;
        }
    }
    Ok(ContinuationResult { u, y: y.expect("schedule is nonempty"), trace })
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Relative `L2(Q)` change of `z`.
    pub z_change: f64,
    pub relaxation: f64,
    /// Coverage of the frozen-coefficient state at `T`.
    pub coverage: f64,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterReport {
    pub success: bool,
    /// The uncontrolled flow already covered the target.
    pub covered_without_control: bool,
    pub outer_iterations: usize,
    pub z_converged: bool,
    pub records: Vec<OuterRecord>,
    /// Coverage of the fully nonlinear state driven by the final control.
    pub final_coverage: f64,
    pub final_violation: TerminalViolation,
    pub control_norm: f64,
    pub picard: PicardReport,
}

/// Alternates penalized control for frozen `z` with the relaxed update
/// `z <- (1 - r) z + r y^{u, z}`, then certifies coverage with a nonlinear
/// re-solve under the final control.
pub fn outer_fixed_point(
    grid: &SpatialGrid,
    times: TimeGrid,
    y0: &[f64],
    target: &TargetSet,
    params: &EnthalpyParams,
    settings: &OuterLoopSettings,
    numerics: &Numerics,
) -> Result<(BoundaryControl, SpaceTimeField, OuterReport)> {
    settings.validate()?;
    params.validate()?;
    grid.check_slice(y0, "y0")?;
    let band = settings.band.band(params);
    let cell_volume = grid.cell_volume();
    let data_for_report = TerminalPenaltyData::new(1.0, target.clone(), params.mu, params.rho)?;

    let zero = BoundaryControl::zeros(grid, times);
    let (free, picard) = solve_nonlinear(&zero, y0, params, &settings.picard, numerics, grid)?;
    let free_coverage = coverage(target, &mushy_mask(free.terminal(), times.steps(), band));
    if free_coverage == 1.0 {
        info!("target covered without control");
        let report = OuterReport {
            success: true,
            covered_without_control: true,
            outer_iterations: 1,
            z_converged: true,
            records: Vec::new(),
            final_coverage: 1.0,
            final_violation: terminal_violation(free.terminal(), &data_for_report, cell_volume),
            control_norm: 0.0,
            picard,
        };
        return Ok((zero, free, report));
    }

    let penalty_mu = params.mu * (1.0 - settings.penalty_margin);
    let mut z = SpaceTimeField::constant_in_time(grid, times, y0)?;
    let mut u = zero;
    let mut relaxation = settings.relaxation;
    let mut records: Vec<OuterRecord> = Vec::new();
    let mut rises = 0;
    let mut z_converged = false;
    for iteration in 1..=settings.max_outer {
        let ops = StepOperators::from_field(&z, params, numerics)?;
        let cont = epsilon_continuation(
            &ops,
            y0,
            target,
            penalty_mu,
            params.rho,
            &settings.eps_schedule,
            &settings.inner,
            settings.violation_tol,
            Some(u),
        )?;
        u = cont.u;
        let frozen_coverage = coverage(target, &mushy_mask(cont.y.terminal(), times.steps(), band));
        let next = z.blend(&cont.y, relaxation);
        let z_change = next.l2_distance(&z) / next.l2_norm().max(f64::MIN_POSITIVE);
        info!("outer {iteration}: z change {z_change:.3e}, frozen coverage {frozen_coverage}, relaxation {relaxation}");
        if let Some(last) = records.last() {
            rises = if z_change > last.z_change { rises + 1 } else { 0 };
        }
        records.push(OuterRecord {
            iteration,
            z_change,
            relaxation,
            coverage: frozen_coverage,
            stages: cont.trace,
        });
        z = next;
        if z_change <= settings.tol_outer && frozen_coverage == 1.0 {
            z_converged = true;
            break;
        }
        if rises >= 2 {
            relaxation *= 0.5;
            rises = 0;
            warn!("z change rose twice; relaxation halved to {relaxation}");
        }
    }
    let (y, picard) = solve_nonlinear(&u, y0, params, &settings.picard, numerics, grid)?;
    let final_coverage = coverage(target, &mushy_mask(y.terminal(), times.steps(), band));
    let report = OuterReport {
        success: z_converged && final_coverage == 1.0,
        covered_without_control: false,
        outer_iterations: records.len(),
        z_converged,
        records,
        final_coverage,
        final_violation: terminal_violation(y.terminal(), &data_for_report, cell_volume),
        control_norm: u.norm(),
        picard,
    };
    Ok((u, y, report))
}
