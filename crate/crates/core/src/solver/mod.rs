//! Two-stage anytime solver for constrained SSPs over deterministic
//! policies.
//!
//! Stage 1 maximizes the Lagrangian dual `L(lambda) = min_pi f(pi) + lambda . g(pi)`.
//! Stage 2 enumerates policies in nondecreasing `L(lambda*, pi)` and keeps
//! the cheapest feasible one, tightening the lower bound as it goes.

mod anytime;
mod dual;
mod enumerate;
mod weighted;

use thiserror::Error;

pub use anytime::{anytime_run, anytime_solve, write_trace_csv, AnytimeResult, TraceRecord};
pub use dual::{dual_ascent, DualConfig, DualState};
pub use enumerate::{Enumerated, PolicyEnumerator};
pub use weighted::{
    scalarize, solve_restricted, solve_weighted_ssp, Heuristic, Restriction, ScalarizedSsp,
    WeightedSolution, ZeroHeuristic, VI_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("expected {expected} multipliers, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("multiplier {0} is not a finite nonnegative number")]
    InvalidMultiplier(f64),
    #[error("no proper policy from state `{0}`")]
    NoProperPolicy(String),
    #[error("no proper policy even without constraints (state `{0}`)")]
    InfeasibleRelaxation(String),
    #[error("certified infeasible: no deterministic policy satisfies the bounds")]
    Infeasible(Box<AnytimeResult>),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
