//! Closed-loop episodes: plan, act, observe, update, repeat.

use std::fmt::Write as _;

use despot_core::backend::{ParallelBackend, SerialBackend, SimulationBackend};
use despot_core::model::DespotModel;
use despot_core::rng::derive_seed;
use despot_core::search::{parallel_search, root_action, serial_search, SearchConfig, SearchOutcome};
use despot_domains::BenchDomain;
use serde::{Deserialize, Serialize};

use crate::filter::belief_update;
use crate::world::World;

/// Which parts of the planner run in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlannerVariant {
    /// Single-path search, serial backend.
    Serial,
    /// Multi-worker tree search, serial backend.
    ParallelTree,
    /// Single-path search, data-parallel backend.
    ParallelBackendOnly,
    /// Multi-worker tree search plus data-parallel backend.
    Hybrid,
}

impl PlannerVariant {
    pub const ALL: [PlannerVariant; 4] = [
        PlannerVariant::Serial,
        PlannerVariant::ParallelTree,
        PlannerVariant::ParallelBackendOnly,
        PlannerVariant::Hybrid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerVariant::Serial => "serial",
            PlannerVariant::ParallelTree => "parallel-tree-only",
            PlannerVariant::ParallelBackendOnly => "parallel-backend-only",
            PlannerVariant::Hybrid => "hybrid",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    fn uses_parallel_tree(&self) -> bool {
        matches!(self, PlannerVariant::ParallelTree | PlannerVariant::Hybrid)
    }

    fn uses_parallel_backend(&self) -> bool {
        matches!(self, PlannerVariant::ParallelBackendOnly | PlannerVariant::Hybrid)
    }
}

/// One planning call under a variant.
pub fn plan<M: DespotModel>(
    model: &M,
    belief: &despot_core::belief::Belief<M::State>,
    config: &SearchConfig,
    variant: PlannerVariant,
) -> Result<SearchOutcome<M>, despot_core::search::SearchError> {
    let serial_backend = SerialBackend::new();
    let parallel_backend = ParallelBackend::new();
    let backend: &dyn SimulationBackend<M> = if variant.uses_parallel_backend() {
        &parallel_backend
    } else {
        &serial_backend
    };
    if variant.uses_parallel_tree() {
        parallel_search(model, backend, belief, config)
    } else {
        serial_search(model, backend, belief, config)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepLog {
    pub action: usize,
    pub reward: f64,
    pub observation: String,
    pub node_count: usize,
    pub trial_count: u64,
    pub expansion_count: u64,
    pub max_depth: u32,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<StepLog>,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    pub terminated: bool,
    pub success: Option<bool>,
    /// Populated when the episode stopped on a planner or filter error;
    /// the partial step log is preserved.
    pub aborted: Option<String>,
}

impl EpisodeRecord {
    /// Recomputes the discounted return from the step log.
    pub fn recompute_return(&self, discount: f64) -> f64 {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| discount.powi(t as i32) * s.reward)
            .sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub variant: PlannerVariant,
    pub search: SearchConfig,
    pub step_limit: usize,
    pub particle_count: usize,
    pub seed: u64,
}

/// Runs one closed-loop episode: sample scenarios from the belief, plan,
/// execute the chosen action in the world, observe, update the belief.
pub fn run_episode<M: BenchDomain>(model: &M, config: &EpisodeConfig) -> EpisodeRecord {
    let seed = config.seed;
    let mut belief = model.initial_belief(config.particle_count, derive_seed(seed, 1));
    let world_state = model.sample_initial_state(derive_seed(seed, 2));
    let mut world = World::new(model, world_state, derive_seed(seed, 3));
    let discount = config.search.discount;

    let mut record = EpisodeRecord {
        steps: Vec::new(),
        discounted_return: 0.0,
        undiscounted_return: 0.0,
        terminated: false,
        success: None,
        aborted: None,
    };

    for t in 0..config.step_limit {
        if world.is_terminal() {
            break;
        }
        let mut search = config.search.clone();
        search.seed = derive_seed(seed, 1000 + t as u64);
        let outcome = match plan(model, &belief, &search, config.variant) {
            Ok(outcome) => outcome,
            Err(e) => {
                record.aborted = Some(format!("planning failed at step {t}: {e}"));
                break;
            }
        };
        let action = match root_action(&outcome.tree) {
            Ok(a) => a,
            Err(e) => {
                record.aborted = Some(format!("no root action at step {t}: {e}"));
                break;
            }
        };
        let out = world.step(action);
        let mut obs_label = String::new();
        let _ = write!(obs_label, "{:?}", out.observation);
        record.steps.push(StepLog {
            action,
            reward: out.reward,
            observation: obs_label,
            node_count: outcome.stats.node_count,
            trial_count: outcome.stats.trial_count,
            expansion_count: outcome.stats.expansion_count,
            max_depth: outcome.stats.max_depth_reached,
            wall_ms: outcome.stats.wall_time.as_secs_f64() * 1e3,
        });
        if out.terminal {
            record.terminated = true;
            break;
        }
        belief = match belief_update(
            model,
            &belief,
            action,
            &out.observation,
            config.particle_count,
            derive_seed(seed, 2000 + t as u64),
        ) {
            Ok(b) => b,
            Err(e) => {
                record.aborted = Some(format!("belief update failed at step {t}: {e}"));
                break;
            }
        };
    }

    record.discounted_return = record.recompute_return(discount);
    record.undiscounted_return = record.steps.iter().map(|s| s.reward).sum();
    record.success = model.episode_success(record.terminated, record.steps.len());
    record
}
