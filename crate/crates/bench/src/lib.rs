//! Closed-loop evaluation harness for the despot planner: world simulation,
//! particle-filter belief tracking, episode and experiment execution, metric
//! aggregation, and result emission.

#![forbid(unsafe_code)]

pub mod cli;
pub mod episode;
pub mod experiment;
pub mod filter;
pub mod report;
pub mod world;

pub use episode::{plan, run_episode, EpisodeConfig, EpisodeRecord, PlannerVariant};
pub use experiment::{run_experiment, ExperimentConfig, Report};
pub use filter::{belief_update, particle_filter_update, FilterError};
pub use report::emit_results;
pub use world::World;
