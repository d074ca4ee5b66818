//! Homothetic-tube optimal control problem and the receding-horizon
//! controller with gain acceptance and the backup mechanism.

mod candidate;
mod cocp;
mod controller;

pub use candidate::shifted_candidate;
pub use cocp::{
    build_cocp, cocp_residual, control_input, fast_path_input, solve_cocp, CocpData, CocpLayout, CocpSolution,
};
pub use controller::{
    section_residual, Controller, ControllerSettings, Mode, SolverStats, StepDetail, StepOutput, StepRecord,
    SynthesisEvent, Volumes,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::polytope::{Polytope, PolytopeError};
use crate::solver::{SolveStatus, SolverError};
use crate::synthesis::SynthesisError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state lies outside the state constraint set")]
    StateOutsideX,
    #[error("optimal control problem is infeasible ({0:?})")]
    Infeasible(SolveStatus),
    #[error("optimal control problem is infeasible at the initial state")]
    InitiallyInfeasible,
    #[error("broken invariant at t={t}: {reason}")]
    BrokenInvariant { t: usize, reason: String },
    #[error("initial synthesis failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Geometry(#[from] PolytopeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Decision of the optimal control problem: `N+1` centers and scalings and
/// `N × M` input vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeDecision {
    pub alpha: Vec<DVector<f64>>,
    pub beta: Vec<f64>,
    pub v: Vec<Vec<DVector<f64>>>,
}

impl TubeDecision {
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    /// Section `i` as the polytope `alpha_i ⊕ beta_i S`.
    pub fn section(&self, i: usize, shape: &Polytope) -> Polytope {
        shape.scaled(self.beta[i].max(0.0)).translated(&self.alpha[i])
    }

    /// Vertices `z_i^j = alpha_i + beta_i s^j`.
    pub fn section_vertices(&self, i: usize, shape_vertices: &[DVector<f64>]) -> Vec<DVector<f64>> {
        shape_vertices
            .iter()
            .map(|s| &self.alpha[i] + s * self.beta[i])
            .collect()
    }
}

/// `‖x‖²_Q + ‖u‖²_R`.
pub fn stage_cost(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    x.dot(&(q * x)) + u.dot(&(r * u))
}
