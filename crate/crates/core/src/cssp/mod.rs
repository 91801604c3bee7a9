//! Explicit constrained stochastic shortest path models and exact
//! evaluation of deterministic policies.

mod eval;
mod json;
mod model;

pub(crate) use eval::solve_dense;
pub use eval::{
    evaluate_policy, evaluate_policy_full, reachable_under, DeterministicPolicy, EvalError,
    PolicyEvaluation, PolicyValue, ABSORPTION_TOLERANCE, DIRECT_SOLVE_LIMIT, FEASIBILITY_TOLERANCE,
    MAX_SWEEPS,
};
pub(crate) use json::{build_fragment, fragment_tables, Fragment};
pub use json::{CostEntry, CostTable, CsspFile, FormatError, TransitionTable};
pub use model::{Action, CsspBuilder, CsspModel, Dynamics, Outcome, Violation, ROW_TOLERANCE};
