//! The classic two-door tiger task.
//!
//! Exactly solvable, used as the planner's optimality oracle: Listen costs 1
//! and hears the tiger's side with accuracy 0.85; opening the tiger-free door
//! pays +10, the other -100, and either open ends the episode.

use despot_core::belief::Belief;
use despot_core::model::{
    assert_action, DespotModel, EnumerableModel, ModelSpec, StepOutcome,
};
use despot_core::rng::RandomStream;
use serde::{Deserialize, Serialize};

use crate::BenchDomain;

pub const LISTEN: usize = 0;
pub const OPEN_LEFT: usize = 1;
pub const OPEN_RIGHT: usize = 2;

pub const LISTEN_REWARD: f64 = -1.0;
pub const CORRECT_DOOR_REWARD: f64 = 10.0;
pub const WRONG_DOOR_REWARD: f64 = -100.0;
pub const HEARING_ACCURACY: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TigerState {
    pub tiger_left: bool,
    pub opened: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TigerObs {
    HearLeft,
    HearRight,
}

#[derive(Debug)]
pub struct TigerModel {
    spec: ModelSpec,
}

impl TigerModel {
    pub fn new() -> Self {
        TigerModel { spec: ModelSpec::new(3, 0.95, 20) }
    }
}

impl Default for TigerModel {
    fn default() -> Self {
        Self::new()
    }
}

impl DespotModel for TigerModel {
    type State = TigerState;
    type Observation = TigerObs;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, state: &TigerState) -> bool {
        state.opened
    }

    fn step(
        &self,
        state: &TigerState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<TigerState, TigerObs> {
        assert_action(&self.spec, action);
        let (next, reward, terminal) = match action {
            LISTEN => (*state, LISTEN_REWARD, false),
            OPEN_LEFT => {
                let reward = if state.tiger_left { WRONG_DOOR_REWARD } else { CORRECT_DOOR_REWARD };
                (TigerState { opened: true, ..*state }, reward, true)
            }
            _ => {
                let reward = if state.tiger_left { CORRECT_DOOR_REWARD } else { WRONG_DOOR_REWARD };
                (TigerState { opened: true, ..*state }, reward, true)
            }
        };
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal }
    }

    fn observe(
        &self,
        next_state: &TigerState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> TigerObs {
        if action != LISTEN {
            // open actions terminate; the label is fixed and carries no
            // information
            return TigerObs::HearLeft;
        }
        let correct = stream.bernoulli(depth, 0, HEARING_ACCURACY);
        if next_state.tiger_left == correct {
            TigerObs::HearLeft
        } else {
            TigerObs::HearRight
        }
    }

    fn upper_bound_heuristic(&self, _state: &TigerState) -> f64 {
        CORRECT_DOOR_REWARD
    }

    fn lower_bound_heuristic(&self, _state: &TigerState) -> f64 {
        LISTEN_REWARD / (1.0 - self.spec.discount)
    }

    fn default_policy_action(&self, _state: &TigerState, _depth: u32) -> usize {
        LISTEN
    }

    fn observation_likelihood(
        &self,
        next_state: &TigerState,
        action: usize,
        observation: &TigerObs,
    ) -> f64 {
        if action != LISTEN {
            return if *observation == TigerObs::HearLeft { 1.0 } else { 0.0 };
        }
        let hears_left = *observation == TigerObs::HearLeft;
        if hears_left == next_state.tiger_left {
            HEARING_ACCURACY
        } else {
            1.0 - HEARING_ACCURACY
        }
    }
}

impl EnumerableModel for TigerModel {
    fn enumerate_states(&self) -> Vec<TigerState> {
        vec![
            TigerState { tiger_left: true, opened: false },
            TigerState { tiger_left: false, opened: false },
        ]
    }

    fn enumerate_observations(&self) -> Vec<TigerObs> {
        vec![TigerObs::HearLeft, TigerObs::HearRight]
    }

    fn expected_reward(&self, state: &TigerState, action: usize) -> f64 {
        match action {
            LISTEN => LISTEN_REWARD,
            OPEN_LEFT => {
                if state.tiger_left { WRONG_DOOR_REWARD } else { CORRECT_DOOR_REWARD }
            }
            _ => {
                if state.tiger_left { CORRECT_DOOR_REWARD } else { WRONG_DOOR_REWARD }
            }
        }
    }

    fn terminates(&self, _state: &TigerState, action: usize) -> bool {
        action != LISTEN
    }

    fn transition_probabilities(&self, state: &TigerState, _action: usize) -> Vec<f64> {
        // listening never moves the tiger
        if state.tiger_left { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
    }

    fn observation_probabilities(&self, next_state: &TigerState, action: usize) -> Vec<f64> {
        if action != LISTEN {
            return vec![1.0, 0.0];
        }
        if next_state.tiger_left {
            vec![HEARING_ACCURACY, 1.0 - HEARING_ACCURACY]
        } else {
            vec![1.0 - HEARING_ACCURACY, HEARING_ACCURACY]
        }
    }
}

impl BenchDomain for TigerModel {
    fn initial_belief(&self, _particles: usize, _seed: u64) -> Belief<TigerState> {
        // the uniform belief is exact with two weighted particles
        Belief::uniform(vec![
            TigerState { tiger_left: true, opened: false },
            TigerState { tiger_left: false, opened: false },
        ])
        .expect("two particles")
    }

    fn sample_initial_state(&self, seed: u64) -> TigerState {
        TigerState {
            tiger_left: RandomStream::new(seed).bernoulli(0, 0, 0.5),
            opened: false,
        }
    }
}
