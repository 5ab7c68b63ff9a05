//! The deterministic-scenario POMDP model abstraction that every domain
//! implements.
//!
//! A model exposes a *deterministic* step function: all stochasticity is read
//! from the scenario's [`RandomStream`], so identical inputs yield
//! bit-identical outputs on every backend and thread. Models are immutable
//! after construction and callable concurrently without synchronization.

use std::fmt::Debug;
use std::hash::Hash;

use crate::rng::RandomStream;

/// Static description of a model: sizes, discount, rollout horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    /// Number of actions, `|A|`.
    pub action_count: usize,
    /// Discount factor, in (0, 1).
    pub discount: f64,
    /// Default maximum search/rollout depth.
    pub max_rollout_depth: u32,
    /// Number of independently steppable dynamics/observation elements.
    pub factored_element_count: usize,
}

impl ModelSpec {
    pub fn new(action_count: usize, discount: f64, max_rollout_depth: u32) -> Self {
        let spec = ModelSpec {
            action_count,
            discount,
            max_rollout_depth,
            factored_element_count: 1,
        };
        spec.assert_valid();
        spec
    }

    pub fn with_elements(mut self, factored_element_count: usize) -> Self {
        self.factored_element_count = factored_element_count;
        self.assert_valid();
        self
    }

    pub fn assert_valid(&self) {
        assert!(self.action_count >= 1, "action_count must be >= 1");
        assert!(
            self.discount > 0.0 && self.discount < 1.0,
            "discount must lie in (0, 1)"
        );
        assert!(self.max_rollout_depth >= 1, "max_rollout_depth must be >= 1");
        assert!(
            self.factored_element_count >= 1,
            "factored_element_count must be >= 1"
        );
    }
}

/// Outcome of one deterministic step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<S, Z> {
    pub next_state: S,
    pub observation: Z,
    pub reward: f64,
    pub terminal: bool,
}

/// One factored element's contribution to a step: the working state with the
/// element applied, plus its reward increment and terminal contribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialStep<S> {
    pub state: S,
    pub reward: f64,
    pub terminal: bool,
}

/// A determinized POMDP model.
///
/// Every operation must be a pure function of its arguments; re-invocation
/// yields bit-identical results. Implementations must panic on an
/// out-of-range action index (contract violation).
pub trait DespotModel: Send + Sync {
    type State: Clone + Debug + Send + Sync + 'static;
    type Observation: Clone + Debug + Eq + Ord + Hash + Send + Sync + 'static;

    fn spec(&self) -> &ModelSpec;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Deterministic step: stochastic outcomes are read from `stream` at
    /// `(depth, slot)` coordinates. `depth` is the destination depth of the
    /// step (the first step out of the root uses depth 1) and must be >= 1.
    fn step(
        &self,
        state: &Self::State,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<Self::State, Self::Observation>;

    /// Emits the observation for an already-stepped state. `step` must route
    /// its observation through this so the factored composition reproduces it.
    fn observe(
        &self,
        next_state: &Self::State,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> Self::Observation;

    /// One element of the factored step. Composing all elements in ascending
    /// `element` order (each receiving the previous element's output state)
    /// must equal `step` exactly, minus the observation which
    /// [`DespotModel::step_composed`] re-attaches via `observe`.
    fn step_factored(
        &self,
        state: &Self::State,
        action: usize,
        stream: &RandomStream,
        depth: u32,
        element: usize,
    ) -> PartialStep<Self::State> {
        assert_eq!(
            self.spec().factored_element_count,
            1,
            "models with more than one element must implement step_factored"
        );
        assert_eq!(element, 0, "element index out of range");
        let out = self.step(state, action, stream, depth);
        PartialStep {
            state: out.next_state,
            reward: out.reward,
            terminal: out.terminal,
        }
    }

    /// The factored route: ordered composition of all elements followed by the
    /// observation draw. Bit-equality with `step` is a model contract.
    fn step_composed(
        &self,
        state: &Self::State,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<Self::State, Self::Observation> {
        let elements = self.spec().factored_element_count;
        let mut current = state.clone();
        let mut reward = 0.0;
        let mut terminal = false;
        for element in 0..elements {
            let part = self.step_factored(&current, action, stream, depth, element);
            current = part.state;
            reward += part.reward;
            terminal |= part.terminal;
        }
        let observation = self.observe(&current, action, stream, depth);
        StepOutcome {
            next_state: current,
            observation,
            reward,
            terminal,
        }
    }

    /// Optimistic estimate of the discounted return from `state`.
    fn upper_bound_heuristic(&self, state: &Self::State) -> f64;

    /// Tail estimate used when a rollout is truncated at the depth cap.
    fn lower_bound_heuristic(&self, _state: &Self::State) -> f64 {
        0.0
    }

    /// The default policy used to initialize lower bounds. Deterministic in
    /// `(state, depth)`; must return a legal action index.
    fn default_policy_action(&self, state: &Self::State, depth: u32) -> usize;

    /// `O(s', a, z)`: probability of observing `z` after reaching
    /// `next_state` via `action`. Consistent with `step`: any observation the
    /// step function emits has positive likelihood.
    fn observation_likelihood(
        &self,
        next_state: &Self::State,
        action: usize,
        observation: &Self::Observation,
    ) -> f64;
}

/// Small models that can enumerate their state and observation spaces
/// exactly. Used by exact oracles (Bayes filtering, value iteration).
pub trait EnumerableModel: DespotModel {
    fn enumerate_states(&self) -> Vec<Self::State>;
    fn enumerate_observations(&self) -> Vec<Self::Observation>;
    /// `R(s, a)` marginalized over the stream.
    fn expected_reward(&self, state: &Self::State, action: usize) -> f64;
    /// True when `(s, a)` terminates the episode with probability 1.
    fn terminates(&self, state: &Self::State, action: usize) -> bool;
    /// Transition distribution over `enumerate_states()`, for non-terminating
    /// `(s, a)`.
    fn transition_probabilities(&self, state: &Self::State, action: usize) -> Vec<f64>;
    /// Observation distribution over `enumerate_observations()`.
    fn observation_probabilities(&self, next_state: &Self::State, action: usize) -> Vec<f64>;
}

/// Panics unless `action` is a legal index for `spec`.
#[inline]
pub fn assert_action(spec: &ModelSpec, action: usize) {
    assert!(
        action < spec.action_count,
        "action index {action} out of range (|A| = {})",
        spec.action_count
    );
}
