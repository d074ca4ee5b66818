use nalgebra::DMatrix;

use super::SolverError;
use crate::linalg::{min_sym_eigenvalue, symmetrize};

const MAX_ITER: usize = 10_000;

/// Stabilizing LQR pair: `u = K x` with `P` the Riccati solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl GainPair {
    pub fn closed_loop(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a + b * &self.k
    }
}

fn gain_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    let s = r + b.transpose() * p * b;
    let rhs = b.transpose() * p * a;
    let lu = s.lu();
    let k = lu.solve(&rhs).ok_or(SolverError::Singular)?;
    Ok(-k)
}

/// Fixed-point Riccati iteration from `P = Q`, stopped when the Frobenius
/// change drops below 1e-10.
pub fn synthesize_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<GainPair, SolverError> {
    let n = a.nrows();
    let m = b.ncols();
    for (what, mat, rows, cols) in [("A", a, n, n), ("B", b, n, m), ("Q", q, n, n), ("R", r, m, m)] {
        if mat.nrows() != rows || mat.ncols() != cols {
            return Err(SolverError::DimensionMismatch {
                what,
                expected: rows * cols,
                found: mat.nrows() * mat.ncols(),
            });
        }
        if mat.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite(what));
        }
    }
    let mut p = q.clone();
    for _ in 0..MAX_ITER {
        let k = gain_from(a, b, r, &p)?;
        let acl = a + b * &k;
        let next = symmetrize(&(q + a.transpose() * &p * &acl));
        if next.iter().any(|x| !x.is_finite()) {
            break;
        }
        let delta = (&next - &p).norm();
        p = next;
        if delta <= 1e-10 || delta <= 1e-15 * p.norm() {
            let k = gain_from(a, b, r, &p)?;
            return Ok(GainPair { p, k });
        }
    }
    Err(SolverError::NoConvergence(MAX_ITER))
}

/// True when the symmetric matrix `m` has smallest eigenvalue at least `-tol`.
pub fn min_eig_psd_check(m: &DMatrix<f64>, tol: f64) -> Result<bool, SolverError> {
    if m.nrows() != m.ncols() {
        return Err(SolverError::DimensionMismatch {
            what: "square matrix",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = crate::linalg::mat_inf_norm(m).max(1.0);
    if (m - m.transpose()).iter().any(|x| x.abs() > 1e-9 * scale) {
        return Err(SolverError::NotSymmetric);
    }
    Ok(min_sym_eigenvalue(m) >= -tol)
}
