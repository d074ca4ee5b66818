//! Adaptive tube model predictive control for constrained linear systems with
//! parametric uncertainty and bounded additive disturbances.
//!
//! The crate is split bottom-up:
//!
//! * [`polytope`] convex polytopes in dimensions 1 to 4 with both representations.
//! * [`solver`] dense LP and QP solvers, Riccati iteration and PSD checks.
//! * [`uncertainty`] parameter sets, set-membership refinement and the
//!   projected-gradient estimator.
//! * [`synthesis`] disturbance sets, tube shape, terminal set and the gain
//!   acceptance criterion.
//! * [`mpc`] the convex optimal control problem, control law, shifted candidate
//!   and the receding-horizon controller with its backup mechanism.
//! * [`sim`] closed-loop simulation, traces and mode comparison.
//! * [`config`] strict JSON configuration loading.

pub mod cli;
pub mod config;
pub mod linalg;
pub mod mpc;
pub mod polytope;
pub mod sim;
pub mod solver;
pub mod synthesis;
pub mod uncertainty;

pub use config::ExperimentConfig;
pub use mpc::{Controller, Mode};
pub use polytope::{HPolytope, Polytope, PolytopeError};
pub use sim::{run_closed_loop, PlantConfig, RunTrace};
