//! Hierarchical constrained SSPs: events and choices form a procedural
//! layer whose edges carry activities, each an SSP over a subset of the
//! global states.

mod eval;
mod json;
mod model;

use thiserror::Error;

use crate::cssp::EvalError;

pub use eval::{
    activity_likelihood, activity_likelihoods, chain_distributions, evaluate_solution,
    min_activity_likelihood, min_activity_likelihoods, procedural_flow, procedural_policies,
    propagate, topological_order, Flow, HierarchicalSolution, ProceduralPolicy, SolutionEvaluation,
};
pub use json::{ActivityFile, ConstraintFile, HcsspFile, SolutionFile};
pub use model::{Activity, Constraint, HcsspBuilder, HcsspModel, HierarchyViolation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("event graph has a cycle")]
    CyclicGraph,
    #[error("no choice assigned at reachable event `{0}`")]
    UnassignedChoice(String),
    #[error("activity `{0}` is never activated")]
    NeverActivated(String),
    #[error("activity `{0}` is activated but has no policy")]
    MissingPolicy(String),
    #[error("no probability mass reaches the states of activity `{0}`")]
    EmptySupport(String),
    #[error("activity `{0}`: {1}")]
    Activity(String, EvalError),
    #[error("{0}")]
    Invalid(String),
}

#[cfg(test)]
mod tests;
