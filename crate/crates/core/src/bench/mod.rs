//! Benchmark scenarios and verification tools: the evacuation generator,
//! brute-force oracles for small instances, random instance generators and
//! Monte Carlo rollouts.

mod evac;
mod grid;
mod oracle;
mod random;
mod rollout;

use thiserror::Error;

use crate::hierarchy::HierarchyError;

pub use evac::{
    build_evacuation, CellRef, ConnectorKind, ConnectorSpec, EvacuationSpec, HazardSpec, RoomSpec,
    DEFAULT_LOCK_PROB, HAZARD_DAMAGE,
};
pub use grid::{grid_cssp, GridTask, INTENDED, MOVES, SLIP};
pub use oracle::{
    brute_force_cssp, brute_force_hcssp, brute_force_hcssp_filtered, enumerate_policies,
    OracleResult, ORACLE_LIMIT,
};
pub use random::{random_cssp, random_hcssp, random_solution};
pub use rollout::{rollout_policy, rollout_solution, McEstimate, MAX_EPISODE_STEPS};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid evacuation spec: {0}")]
    InvalidSpec(String),
    #[error("more than {limit} candidates to enumerate")]
    TooLarge { limit: usize },
    #[error("rollout failed: {0}")]
    Rollout(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}
