//! Independent exact solvers and statistics used as test oracles.
//!
//! Everything here is deliberately written as plain, direct computation:
//! exact Bayes filtering and finite-horizon value iteration over enumerable
//! models, explicit-MDP value iteration, and the couple of statistical tests
//! the harness suites need. None of it shares code with the planner's search
//! or backup paths.

#![forbid(unsafe_code)]

pub mod exact;
pub mod mdp;
pub mod pomdp_vi;
pub mod stats;
