//! Benchmark domains for the despot planner.
//!
//! Three evaluation tasks (grid navigation with a partially known map,
//! multi-agent rock sample, crowd driving) plus two tiny exactly-solvable
//! diagnostics (tiger, chain). Every domain implements
//! [`despot_core::DespotModel`] and the harness-facing [`BenchDomain`]
//! extension; the CLI constructs them by name through [`build_domain`].

#![forbid(unsafe_code)]

pub mod chain;
pub mod config;
pub mod driving;
pub mod mars;
pub mod navigation;
pub mod tiger;

use despot_core::belief::{Belief, BeliefError};
use despot_core::model::DespotModel;
use thiserror::Error;

pub use chain::ChainModel;
pub use config::{ConfigError, KvConfig};
pub use driving::{DriveConfig, DrivingModel};
pub use mars::{MarsConfig, MarsModel};
pub use navigation::{NavConfig, NavigationModel};
pub use tiger::TigerModel;

/// Harness-facing extensions: initial beliefs, world start states, and
/// domain-defined metrics.
pub trait BenchDomain: DespotModel + Sized {
    /// Initial belief as a particle set. Deterministic in `(particles, seed)`;
    /// exactly representable beliefs may ignore the particle count.
    fn initial_belief(&self, particles: usize, seed: u64) -> Belief<Self::State>;

    /// Ground-truth start state for the world simulator, drawn from the
    /// initial belief.
    fn sample_initial_state(&self, seed: u64) -> Self::State {
        let belief = self.initial_belief(1, seed);
        belief.particles()[0].state.clone()
    }

    /// Domain-defined episode success metric, when one exists.
    fn episode_success(&self, _terminated: bool, _steps: usize) -> Option<bool> {
        None
    }

    /// Structured belief update. `None` means "use the generic particle
    /// filter". Domains with exactly-observed components can override.
    fn belief_update_override(
        &self,
        _belief: &Belief<Self::State>,
        _action: usize,
        _observation: &Self::Observation,
        _particles: usize,
        _seed: u64,
    ) -> Option<Result<Belief<Self::State>, BeliefError>> {
        None
    }
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("unknown domain '{0}' (known: {1})")]
    Unknown(String, String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Domains constructible by name.
pub const DOMAIN_NAMES: [&str; 5] = ["navigation", "mars", "driving", "tiger", "chain"];

/// A domain model built from a name string plus key/value settings.
pub enum AnyDomain {
    Navigation(NavigationModel),
    Mars(MarsModel),
    Driving(DrivingModel),
    Tiger(TigerModel),
    Chain(ChainModel),
}

impl AnyDomain {
    pub fn name(&self) -> &'static str {
        match self {
            AnyDomain::Navigation(_) => "navigation",
            AnyDomain::Mars(_) => "mars",
            AnyDomain::Driving(_) => "driving",
            AnyDomain::Tiger(_) => "tiger",
            AnyDomain::Chain(_) => "chain",
        }
    }
}

/// Builds a registered domain. `kv` supplies the domain's config keys;
/// unknown keys are rejected.
pub fn build_domain(name: &str, kv: &KvConfig) -> Result<AnyDomain, DomainError> {
    match name {
        "navigation" => Ok(AnyDomain::Navigation(NavigationModel::new(NavConfig::from_kv(kv)?))),
        "mars" => Ok(AnyDomain::Mars(MarsModel::new(MarsConfig::from_kv(kv)?))),
        "driving" => Ok(AnyDomain::Driving(DrivingModel::new(DriveConfig::from_kv(kv)?))),
        "tiger" => {
            kv.check_keys(&[])?;
            Ok(AnyDomain::Tiger(TigerModel::new()))
        }
        "chain" => {
            kv.check_keys(&["cells"])?;
            Ok(AnyDomain::Chain(ChainModel::new(kv.get_u64("cells", 8)? as u8)))
        }
        other => Err(DomainError::Unknown(other.to_owned(), DOMAIN_NAMES.join(", "))),
    }
}
