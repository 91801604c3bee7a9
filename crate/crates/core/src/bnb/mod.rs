//! Branch and bound over the space of per-activity secondary-cost budgets.
//!
//! Each partition is a box of budget intervals. Its lower bound plans every
//! activity under the box's upper limits and charges the procedural problem
//! the box's lower limits; its upper bound assembles the activity incumbents
//! into a hierarchical solution and evaluates it exactly.

mod bounds;
mod partition;
mod search;

use thiserror::Error;

use crate::hierarchy::HierarchyError;
use crate::reduction::ReductionError;
use crate::solver::SolveError;

pub use bounds::{ActivityPlan, Bounder, PartitionBounds, UpperBound};
pub use partition::{initial_partition, split_longest_edge, Partition};
pub use search::{
    branch_and_bound, write_bnb_trace_csv, BnbConfig, BnbOutcome, BnbTraceRecord, StopReason,
};

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("constrained activity `{0}` is never activated")]
    NeverActivated(String),
    #[error("partition has no side of positive length")]
    DegeneratePartition,
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no feasible solution found within the budget")]
    NoFeasibleSolution(Box<BnbOutcome>),
    #[error("certified infeasible")]
    ConvergedInfeasible(Box<BnbOutcome>),
}
