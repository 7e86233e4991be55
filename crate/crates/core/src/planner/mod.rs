//! COM path tracking as a bound-constrained nonlinear program, and the
//! scripted docking sequence.
//!
//! The decision vector is `X = [a, ω, φ, P_1 … P_n]`: gait amplitude,
//! frequency, phase offset, then `n` COM waypoints. The cost is
//! `Σ ‖P_i − P_i^des‖²` subject to `x_min ≤ X ≤ x_max` and the equality
//! `P_i^pred(a, ω) − P_i = 0`, where the prediction chains the flat-ground
//! displacement model from the start COM.

mod docking;
mod nlp;
mod task;

pub use docking::{
    make_docking_script, DockingConfig, DockingError, DockingScript, EnvelopeQuantity,
    PhaseAction, PhaseKind, ScriptPhase,
};
pub use nlp::{
    constraint_residual, cost, cost_gradient, max_residual, penalized_gradient_analytic,
    penalized_objective, solve, GradientMode, PlanBounds, PlanProblem, PlanSolution,
    SolverOptions, TraceRow,
};
pub use task::PlanTask;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("decision vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid plan problem: {0}")]
    InvalidProblem(String),
    #[error("constraint residual {residual:e} exceeds tolerance at termination")]
    Infeasible {
        residual: f64,
        solution: Box<PlanSolution>,
    },
}
