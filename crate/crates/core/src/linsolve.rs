//! Linear solvers for the symmetric positive-definite step matrices.

use serde::{Deserialize, Serialize};

/// Strategy for the per-step linear systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LinearSolver {
    /// Tridiagonal elimination in 1D, preconditioned CG in 2D.
    Auto,
    /// Direct elimination; 1D grids only.
    Tridiagonal,
    /// Jacobi-preconditioned conjugate gradient.
    Cg { tolerance: f64, max_iterations: usize },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Auto
    }
}

impl LinearSolver {
    /// CG tolerance used by [`LinearSolver::Auto`] in 2D.
    pub const AUTO_CG_TOLERANCE: f64 = 1e-13;
}

/// LU factors of a symmetric tridiagonal matrix (Thomas algorithm).
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    off: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalFactor {
    /// `diag` has length `n`, `off[i]` couples unknowns `i` and `i + 1`.
    pub fn new(diag: &[f64], off: &[f64]) -> Option<Self> {
        let n = diag.len();
        debug_assert_eq!(off.len() + 1, n);
        let mut inv_pivot = vec![0.0; n];
        let mut upper = vec![0.0; n.saturating_sub(1)];
        let mut pivot = diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = diag[i] - off[i - 1] * upper[i - 1];
            }
            if !(pivot.is_finite() && pivot > 0.0) {
                return None;
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                upper[i] = off[i] * inv_pivot[i];
            }
        }
        Some(Self {
            off: off.to_vec(),
            inv_pivot,
            upper,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        x[0] = rhs[0] * self.inv_pivot[0];
        for i in 1..n {
            x[i] = (rhs[i] - self.off[i - 1] * x[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
        x
    }
}

/// Outcome of a CG solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradient for `A x = b`, with `A` given as
/// a matrix-vector product.
pub fn pcg<F>(apply: F, diag: &[f64], rhs: &[f64], tolerance: f64, max_iterations: usize) -> CgOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return CgOutcome { solution: x, iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 0..max_iterations {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome { solution: x, iterations: it, relative_residual: res, converged: false };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tolerance {
            return CgOutcome { solution: x, iterations: it + 1, relative_residual: res, converged: true };
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { solution: x, iterations: max_iterations, relative_residual: res, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize) -> (Vec<f64>, Vec<f64>) {
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + (i as f64 * 0.37).sin()).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -0.6 - 0.1 * (i as f64).cos()).collect();
        (diag, off)
    }

    fn multiply(diag: &[f64], off: &[f64], x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = diag[i] * x[i];
            if i > 0 {
                v += off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += off[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    #[test]
    fn thomas_and_cg_agree() {
        let n = 40;
        let (diag, off) = laplacian_like(n);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).cos()).collect();
        let direct = TridiagonalFactor::new(&diag, &off).unwrap().solve(&rhs);
        let mut check = vec![0.0; n];
        multiply(&diag, &off, &direct, &mut check);
        for (a, b) in check.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-13);
        }
        let cg = pcg(|x, out| multiply(&diag, &off, x, out), &diag, &rhs, 1e-14, 500);
        assert!(cg.converged);
        for (a, b) in cg.solution.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_rejects_indefinite() {
        assert!(TridiagonalFactor::new(&[1.0, -1.0], &[0.0]).is_none());
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 30;
        let (diag, off) = laplacian_like(n);
        let rhs = vec![1.0; n];
        let out = pcg(|x, o| multiply(&diag, &off, x, o), &diag, &rhs, 1e-15, 2);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
