//! Scenario sampling.
//!
//! A scenario determinizes the future: a start state drawn from the belief
//! plus a random stream whose numbers fix every transition and observation
//! outcome along the way.

use thiserror::Error;

use crate::belief::Belief;
use crate::rng::{derive_seed, RandomStream};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario count must be >= 1")]
    InvalidCount,
}

/// A sampled start state plus its deterministic number stream.
#[derive(Clone, Debug)]
pub struct Scenario<S> {
    /// Index in `[0, K)`, contiguous within one root.
    pub id: usize,
    pub initial_state: S,
    pub stream: RandomStream,
}

// Scenario ids salt the per-scenario stream seeds directly; the state-draw
// stream uses a salt no id can collide with.
const STATE_DRAW_SALT: u64 = u64::MAX;

/// Draws `k` scenarios i.i.d. from `belief`. Deterministic in
/// `(belief, k, seed)`: states come from counter-indexed uniform draws over
/// the belief CDF and stream seeds are derived from `(seed, id)`.
pub fn sample_scenarios<S: Clone>(
    belief: &Belief<S>,
    k: usize,
    seed: u64,
) -> Result<Vec<Scenario<S>>, ScenarioError> {
    if k == 0 {
        return Err(ScenarioError::InvalidCount);
    }
    let draw = RandomStream::new(derive_seed(seed, STATE_DRAW_SALT));
    Ok((0..k)
        .map(|id| {
            let u = draw.uniform(0, id as u32);
            let state = belief.particles()[belief.index_at(u)].state.clone();
            Scenario {
                id,
                initial_state: state,
                stream: RandomStream::new(derive_seed(seed, id as u64)),
            }
        })
        .collect())
}
