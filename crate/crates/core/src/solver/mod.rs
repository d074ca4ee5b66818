//! Dense convex solvers: two-phase simplex for LPs, a Goldfarb-Idnani dual
//! active-set method for strictly convex QPs (with a proximal outer loop for
//! semidefinite Hessians), discrete Riccati iteration and a PSD test.

mod lp;
mod qp;
mod riccati;

pub use lp::solve_lp;
pub use qp::solve_qp;
pub use riccati::{min_eig_psd_check, synthesize_gain, GainPair};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch in {what}: expected {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
    #[error("Riccati iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("R + B'PB is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

/// Lagrange multipliers. Inequality and bound multipliers are nonnegative;
/// stationarity reads `H x + f + A' ineq + Aeq' eq - lower + upper = 0`.
#[derive(Debug, Clone, Default)]
pub struct Duals {
    pub ineq: DVector<f64>,
    pub eq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub duals: Duals,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn failed(status: SolveStatus, n: usize, iterations: usize) -> Self {
        SolveOutcome {
            status,
            x: DVector::from_element(n, f64::NAN),
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            duals: Duals::default(),
            kkt_residual: f64::INFINITY,
            iterations,
        }
    }
}

/// `min 0.5 x'Hx + f'x  s.t.  A x <= b, Aeq x = beq, lower <= x <= upper`.
/// For an LP `h` is `None`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub h: Option<DMatrix<f64>>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Problem {
    pub fn lp(c: DVector<f64>) -> Self {
        let n = c.len();
        Problem {
            h: None,
            f: c,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            aeq: DMatrix::zeros(0, n),
            beq: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn qp(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let mut p = Problem::lp(f);
        p.h = Some(h);
        p
    }

    pub fn with_ineq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_eq(mut self, aeq: DMatrix<f64>, beq: DVector<f64>) -> Self {
        self.aeq = aeq;
        self.beq = beq;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn nvars(&self) -> usize {
        self.f.len()
    }

    pub(crate) fn validate(&self) -> Result<(), SolverError> {
        let n = self.nvars();
        let check = |what, expected, found| {
            if expected != found {
                Err(SolverError::DimensionMismatch { what, expected, found })
            } else {
                Ok(())
            }
        };
        if let Some(h) = &self.h {
            check("H rows", n, h.nrows())?;
            check("H cols", n, h.ncols())?;
            if h.iter().any(|x| !x.is_finite()) {
                return Err(SolverError::NonFinite("H"));
            }
        }
        check("A cols", n, self.a.ncols())?;
        check("b", self.a.nrows(), self.b.len())?;
        check("Aeq cols", n, self.aeq.ncols())?;
        check("beq", self.aeq.nrows(), self.beq.len())?;
        check("lower", n, self.lower.len())?;
        check("upper", n, self.upper.len())?;
        if self.f.iter().any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite("f"));
        }
        if self.a.iter().chain(self.b.iter()).any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite("A, b"));
        }
        if self.aeq.iter().chain(self.beq.iter()).any(|x| !x.is_finite()) {
            return Err(SolverError::NonFinite("Aeq, beq"));
        }
        if self.lower.iter().any(|x| x.is_nan() || *x == f64::INFINITY)
            || self.upper.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY)
        {
            return Err(SolverError::NonFinite("bounds"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let lin = self.f.dot(x);
        match &self.h {
            Some(h) => 0.5 * x.dot(&(h * x)) + lin,
            None => lin,
        }
    }

    /// Scaled KKT residual: the max of relative stationarity error, primal
    /// infeasibility, dual infeasibility and complementarity.
    pub fn kkt_residual(&self, x: &DVector<f64>, d: &Duals) -> f64 {
        let n = self.nvars();
        let hx = match &self.h {
            Some(h) => h * x,
            None => DVector::zeros(n),
        };
        let mut grad = &hx + &self.f;
        if d.ineq.len() == self.a.nrows() && self.a.nrows() > 0 {
            grad += self.a.transpose() * &d.ineq;
        }
        if d.eq.len() == self.aeq.nrows() && self.aeq.nrows() > 0 {
            grad += self.aeq.transpose() * &d.eq;
        }
        if d.lower.len() == n {
            grad -= &d.lower;
        }
        if d.upper.len() == n {
            grad += &d.upper;
        }
        let mut scale = 1.0_f64.max(crate::linalg::inf_norm(&self.f));
        scale = scale.max(crate::linalg::inf_norm(&hx));
        let mut res = crate::linalg::inf_norm(&grad) / scale;

        for i in 0..self.a.nrows() {
            let row = self.a.row(i);
            let rn = row.norm().max(1.0);
            let slack = self.b[i] - row.dot(&x.transpose());
            res = res.max((-slack).max(0.0) / rn);
            if let Some(l) = d.ineq.get(i) {
                res = res.max((-l).max(0.0));
                res = res.max((l * rn * slack).abs() / scale / rn);
            }
        }
        for i in 0..self.aeq.nrows() {
            let row = self.aeq.row(i);
            let rn = row.norm().max(1.0);
            res = res.max((row.dot(&x.transpose()) - self.beq[i]).abs() / rn);
        }
        for j in 0..n {
            if self.lower[j].is_finite() {
                let s = x[j] - self.lower[j];
                res = res.max((-s).max(0.0));
                if let Some(l) = d.lower.get(j) {
                    res = res.max((-l).max(0.0)).max((l * s).abs() / scale);
                }
            }
            if self.upper[j].is_finite() {
                let s = self.upper[j] - x[j];
                res = res.max((-s).max(0.0));
                if let Some(l) = d.upper.get(j) {
                    res = res.max((-l).max(0.0)).max((l * s).abs() / scale);
                }
            }
        }
        res
    }
}
