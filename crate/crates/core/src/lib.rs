//! Anytime online POMDP planning over determinized scenarios.
//!
//! The planner builds a sparse belief tree conditioned on `K` sampled
//! scenarios (a start state plus a deterministic random-number stream each),
//! expands frontier leaves with batched Monte Carlo simulation, and maintains
//! upper/lower value bounds through scenario-weighted Bellman backups. Two
//! search drivers share one trial engine: a serial anytime loop and a
//! multi-worker shared-tree loop using scenario-weighted UCT action selection
//! plus virtual losses on observation branches. Leaf expansion and bound
//! initialization run behind [`backend::SimulationBackend`], with a serial
//! reference implementation and a data-parallel one that are bit-identical by
//! construction.
//!
//! Domains implement [`model::DespotModel`]; everything in this crate is
//! domain-agnostic.

#![forbid(unsafe_code)]

pub mod backend;
pub mod belief;
#[cfg(test)]
pub(crate) mod testutil;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod search;
pub mod tree;

pub use backend::{
    backend_from_name, rollout, ExpansionRequest, ExpansionResult, SerialBackend,
    ParallelBackend, SimContext, SimulationBackend,
};
pub use belief::{Belief, Particle};
pub use model::{DespotModel, EnumerableModel, ModelSpec, PartialStep, StepOutcome};
pub use rng::RandomStream;
pub use scenario::{sample_scenarios, Scenario};
pub use search::{
    parallel_search, root_action, serial_search, SearchConfig, SearchOutcome, SearchStats,
};
pub use tree::{Bounds, Node, ObsKey, Tree};
