//! Ground-truth world simulation.
//!
//! The world steps the true state through the model's deterministic step
//! function with a fresh random stream per step, drawn from its own RNG —
//! never from the planner's scenarios.

use despot_core::model::{DespotModel, StepOutcome};
use despot_core::rng::RandomStream;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct World<'a, M: DespotModel> {
    model: &'a M,
    state: M::State,
    rng: ChaCha8Rng,
    steps: usize,
}

impl<'a, M: DespotModel> World<'a, M> {
    pub fn new(model: &'a M, state: M::State, seed: u64) -> Self {
        World { model, state, rng: ChaCha8Rng::seed_from_u64(seed), steps: 0 }
    }

    pub fn state(&self) -> &M::State {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_terminal(&self) -> bool {
        self.model.is_terminal(&self.state)
    }

    /// Executes one action in the true world.
    pub fn step(&mut self, action: usize) -> StepOutcome<M::State, M::Observation> {
        let stream = RandomStream::new(self.rng.next_u64());
        let out = self.model.step(&self.state, action, &stream, 1);
        self.state = out.next_state.clone();
        self.steps += 1;
        out
    }
}
