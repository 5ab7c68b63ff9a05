//! A tiny enumerable corridor for exact-filter diagnostics.
//!
//! `n` cells in a row, move left/right with success probability 0.9, and a
//! noisy position sensor that reads the true cell with probability 0.7 and a
//! uniformly random other cell otherwise. Occupying the rightmost cell pays
//! +1 at step time. Small enough for exact Bayes filtering and useful as a
//! type carrier for synthetic-tree tests.

use despot_core::belief::Belief;
use despot_core::model::{assert_action, DespotModel, EnumerableModel, ModelSpec, StepOutcome};
use despot_core::rng::RandomStream;

use crate::BenchDomain;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const MOVE_SUCCESS: f64 = 0.9;
const SENSE_ACCURACY: f64 = 0.7;

#[derive(Debug)]
pub struct ChainModel {
    spec: ModelSpec,
    cells: u8,
}

impl ChainModel {
    pub fn new(cells: u8) -> Self {
        assert!(cells >= 2, "chain needs at least two cells");
        ChainModel { spec: ModelSpec::new(2, 0.95, 10), cells }
    }

    pub fn cells(&self) -> u8 {
        self.cells
    }

    fn moved(&self, cell: u8, action: usize) -> u8 {
        match action {
            LEFT => cell.saturating_sub(1),
            _ => (cell + 1).min(self.cells - 1),
        }
    }
}

impl DespotModel for ChainModel {
    type State = u8;
    type Observation = u8;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, _state: &u8) -> bool {
        false
    }

    fn step(&self, state: &u8, action: usize, stream: &RandomStream, depth: u32) -> StepOutcome<u8, u8> {
        assert_action(&self.spec, action);
        let reward = if *state == self.cells - 1 { 1.0 } else { 0.0 };
        let next = if stream.bernoulli(depth, 0, MOVE_SUCCESS) {
            self.moved(*state, action)
        } else {
            *state
        };
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal: false }
    }

    fn observe(&self, next_state: &u8, _action: usize, stream: &RandomStream, depth: u32) -> u8 {
        let u = stream.uniform(depth, 1);
        if u < SENSE_ACCURACY {
            *next_state
        } else {
            // remaining mass spread uniformly over the other cells
            let others = self.cells - 1;
            let slot = ((u - SENSE_ACCURACY) / (1.0 - SENSE_ACCURACY) * others as f64) as u8 % others;
            if slot >= *next_state { slot + 1 } else { slot }
        }
    }

    fn upper_bound_heuristic(&self, _state: &u8) -> f64 {
        1.0 / (1.0 - self.spec.discount)
    }

    fn default_policy_action(&self, _state: &u8, _depth: u32) -> usize {
        RIGHT
    }

    fn observation_likelihood(&self, next_state: &u8, _action: usize, observation: &u8) -> f64 {
        if observation == next_state {
            SENSE_ACCURACY
        } else if *observation < self.cells {
            (1.0 - SENSE_ACCURACY) / (self.cells - 1) as f64
        } else {
            0.0
        }
    }
}

impl EnumerableModel for ChainModel {
    fn enumerate_states(&self) -> Vec<u8> {
        (0..self.cells).collect()
    }

    fn enumerate_observations(&self) -> Vec<u8> {
        (0..self.cells).collect()
    }

    fn expected_reward(&self, state: &u8, _action: usize) -> f64 {
        if *state == self.cells - 1 { 1.0 } else { 0.0 }
    }

    fn terminates(&self, _state: &u8, _action: usize) -> bool {
        false
    }

    fn transition_probabilities(&self, state: &u8, action: usize) -> Vec<f64> {
        let mut probs = vec![0.0; self.cells as usize];
        let target = self.moved(*state, action);
        probs[target as usize] += MOVE_SUCCESS;
        probs[*state as usize] += 1.0 - MOVE_SUCCESS;
        probs
    }

    fn observation_probabilities(&self, next_state: &u8, _action: usize) -> Vec<f64> {
        (0..self.cells)
            .map(|z| {
                if z == *next_state {
                    SENSE_ACCURACY
                } else {
                    (1.0 - SENSE_ACCURACY) / (self.cells - 1) as f64
                }
            })
            .collect()
    }
}

impl BenchDomain for ChainModel {
    fn initial_belief(&self, _particles: usize, _seed: u64) -> Belief<u8> {
        Belief::uniform((0..self.cells).collect()).expect("cells >= 2")
    }

    fn sample_initial_state(&self, seed: u64) -> u8 {
        RandomStream::new(seed).index(0, 0, self.cells as usize) as u8
    }
}
