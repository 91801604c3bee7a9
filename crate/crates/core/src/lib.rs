//! Solver library for hierarchical constrained stochastic shortest path
//! problems (HC-SSPs).
//!
//! * [`cssp`]: explicit constrained SSP models and exact policy evaluation.
//! * [`solver`]: the two-stage anytime constrained SSP solver (Lagrangian
//!   dual ascent followed by next-best policy enumeration).
//! * [`hierarchy`]: HC-SSP models, procedural policies and hierarchical
//!   solution evaluation.
//! * [`reduction`]: procedural and activity planning as constrained SSPs.
//! * [`bnb`]: branch-and-bound over the budget-allocation space.
//! * [`bench`]: evacuation scenario generator, brute-force oracles, Monte
//!   Carlo rollouts and random instances.

pub mod bench;
pub mod bnb;
pub mod cssp;
pub mod graph;
pub mod hierarchy;
pub mod reduction;
pub mod solver;

#[cfg(test)]
mod testing;
