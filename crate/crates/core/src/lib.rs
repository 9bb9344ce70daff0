//! Solver, verifier and simulator for hidden two-state bandit arms whose
//! availability changes from slot to slot.
//!
//! - [`model`]: arm parameters, belief updates and expected rewards.
//! - [`solver`]: value iteration for the single-arm problem with a subsidy
//!   for not playing.
//! - [`structure`]: numerical checks of convexity, monotonicity and threshold
//!   shape on solved tables.
//! - [`indexer`]: not-play regions, indexability and arm indices.
//! - [`simulator`]: Monte-Carlo comparison of index, myopic and random
//!   policies over several arms.
//! - [`report`]: CSV layouts for value tables and simulation results.

pub mod indexer;
pub mod model;
pub mod report;
pub mod simulator;
pub mod solver;
pub mod structure;

pub use model::{Action, ArmKind, ArmParams, Availability, Belief, ModelError, Violation};
pub use solver::{extract_policy, solve, PolicyTable, SolverConfig, SolverError, ValueTables};
