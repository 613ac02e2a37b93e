//! Backward adjoint system with the penalized terminal datum.
//!
//! The backward step is the transpose of the forward step: with
//! `S_n = M + dt K_n`, the forward recursion `S_n y^{n+1} = M y^n + dt B u^n`
//! pairs with `S_n p^n = M p^{n+1}`, and summing gives
//! `<y^N, p^N> - <y^0, p^0> = sum_n dt sum_f area u_f^n p^n_f`.

use serde::Serialize;

use crate::enthalpy::EnthalpyParams;
use crate::error::{Error, Result};
use crate::forward::{Numerics, StepOperators};
use crate::grid::{BoundaryControl, SpaceTimeField};
use crate::mushy::TargetSet;

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalPenaltyData {
    pub epsilon: f64,
    pub target: TargetSet,
    pub mu: f64,
    pub rho: f64,
}

impl TerminalPenaltyData {
    pub fn new(epsilon: f64, target: TargetSet, mu: f64, rho: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive and finite"));
        }
        if !(mu > 0.0) {
            return Err(Error::config("mu", "must be positive"));
        }
        if !(rho > 0.0) {
            return Err(Error::config("rho", "must be positive"));
        }
        Ok(Self { epsilon, target, mu, rho })
    }

    /// Signed distance of `v` to `[-mu, rho + mu]`: negative below, positive above.
    pub fn excess(&self, v: f64) -> f64 {
        if v < -self.mu {
            v + self.mu
        } else if v > self.rho + self.mu {
            v - self.rho - self.mu
        } else {
            0.0
        }
    }
}

/// `(1/eps) 1_target [(yT + mu)^- - (yT - rho - mu)^+]`.
pub fn terminal_condition(y_t: &[f64], data: &TerminalPenaltyData) -> Vec<f64> {
    y_t.iter()
        .zip(data.target.mask())
        .map(|(&v, &inside)| if inside { -data.excess(v) / data.epsilon } else { 0.0 })
        .collect()
}

/// Norms over the target of the two one-sided violations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TerminalViolation {
    /// `||(y(T) + mu)^-||` on the target.
    pub below: f64,
    /// `||(y(T) - rho - mu)^+||` on the target.
    pub above: f64,
}

impl TerminalViolation {
    pub fn sum(&self) -> f64 {
        self.below + self.above
    }

    pub fn max(&self) -> f64 {
        self.below.max(self.above)
    }
}

pub fn terminal_violation(y_t: &[f64], data: &TerminalPenaltyData, cell_volume: f64) -> TerminalViolation {
    let (mut below, mut above) = (0.0, 0.0);
    for c in data.target.cells() {
        let e = data.excess(y_t[c]);
        if e < 0.0 {
            below += cell_volume * e * e;
        } else {
            above += cell_volume * e * e;
        }
    }
    TerminalViolation { below: below.sqrt(), above: above.sqrt() }
}

/// How backward steps pick their operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdjointMode {
    #[default]
    Transpose,
    /// Uses the operator of step `n + 1` on step `n`; breaks duality on
    /// purpose and serves as a negative control for the verify suite.
    #[doc(hidden)]
    Mismatched,
}

/// Integrates `p` backward from `p(T) = pT` with the forward operators.
pub fn solve_backward(ops: &StepOperators, p_t: &[f64]) -> Result<SpaceTimeField> {
    solve_backward_with(ops, p_t, AdjointMode::Transpose)
}

pub fn solve_backward_with(ops: &StepOperators, p_t: &[f64], mode: AdjointMode) -> Result<SpaceTimeField> {
    let grid = ops.grid();
    grid.check_slice(p_t, "pT")?;
    if !p_t.iter().all(|v| v.is_finite()) {
        return Err(Error::Invariant("terminal adjoint datum is not finite".into()));
    }
    let times = ops.times();
    let vol = grid.cell_volume();
    let mut p = SpaceTimeField::zeros(grid, times);
    p.level_mut(times.steps()).copy_from_slice(p_t);
    let mut rhs = vec![0.0; grid.cell_count()];
    for n in (0..times.steps()).rev() {
        for (r, v) in rhs.iter_mut().zip(p.level(n + 1)) {
            *r = vol * v;
        }
        let op = match mode {
            AdjointMode::Transpose => n,
            AdjointMode::Mismatched => (n + 1).min(times.steps() - 1),
        };
        let prev = ops.solve(op, &rhs)?;
        p.level_mut(n).copy_from_slice(&prev);
    }
    Ok(p)
}

/// Builds the operators from `z` and integrates backward.
pub fn solve_backward_field(
    z: &SpaceTimeField,
    p_t: &[f64],
    params: &EnthalpyParams,
    numerics: &Numerics,
) -> Result<SpaceTimeField> {
    let ops = StepOperators::from_field(z, params, numerics)?;
    solve_backward(&ops, p_t)
}

/// Boundary trace of `p` paired with the control layout: row `n` holds
/// `p^n` at the cells adjacent to each boundary face.
pub fn boundary_trace(ops: &StepOperators, p: &SpaceTimeField) -> BoundaryControl {
    let times = ops.times();
    let faces = ops.boundary_faces();
    let mut values = Vec::with_capacity(times.steps() * faces.len());
    for n in 0..times.steps() {
        let level = p.level(n);
        values.extend(faces.iter().map(|f| level[f.cell]));
    }
    BoundaryControl::from_values(ops.grid(), times, values).expect("trace matches the grid")
}

/// Relative residual of `<y(T), p(T)> - <y(0), p(0)> - int_Sigma u p`,
/// scaled by the sum of the magnitudes of the three terms.
pub fn duality_check(ops: &StepOperators, y: &SpaceTimeField, u: &BoundaryControl, p: &SpaceTimeField) -> f64 {
    let grid = y.grid();
    let terminal = grid.inner(y.terminal(), p.terminal());
    let initial = grid.inner(y.initial(), p.initial());
    let boundary = u.inner(&boundary_trace(ops, p));
    let scale = terminal.abs() + initial.abs() + boundary.abs();
    if scale == 0.0 {
        return 0.0;
    }
    (terminal - initial - boundary).abs() / scale
}
