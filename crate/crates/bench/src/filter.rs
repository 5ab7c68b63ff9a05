//! Belief tracking: a bootstrap particle filter with a domain override hook.

use despot_core::belief::{Belief, BeliefError, Particle};
use despot_core::model::DespotModel;
use despot_core::rng::RandomStream;
use despot_domains::BenchDomain;
use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(
        "belief degenerated: the observation has zero likelihood under every \
         propagated particle"
    )]
    Degenerate,
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Bootstrap update: propagate every particle through one freshly sampled
/// transition, weight by the observation likelihood, normalize, and resample
/// systematically to `particle_count` equally weighted particles.
///
/// A compact exact belief (fewer particles than the target count) is first
/// expanded to `particle_count` ancestors so stochastic transitions are
/// represented by many draws, not one per support point.
pub fn particle_filter_update<M: DespotModel>(
    model: &M,
    belief: &Belief<M::State>,
    action: usize,
    observation: &M::Observation,
    particle_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Belief<M::State>, FilterError> {
    let ancestors: Vec<(M::State, f64)> = if belief.len() >= particle_count {
        belief
            .particles()
            .iter()
            .map(|p| (p.state.clone(), p.weight))
            .collect()
    } else {
        belief
            .systematic_indices(particle_count, rng.random::<f64>())
            .into_iter()
            .map(|idx| {
                (
                    belief.particles()[idx].state.clone(),
                    1.0 / particle_count as f64,
                )
            })
            .collect()
    };
    let mut weighted = Vec::with_capacity(ancestors.len());
    for (state, prior_weight) in ancestors {
        let stream = RandomStream::new(rng.next_u64());
        let out = model.step(&state, action, &stream, 1);
        let weight =
            prior_weight * model.observation_likelihood(&out.next_state, action, observation);
        weighted.push(Particle { state: out.next_state, weight });
    }
    if weighted.iter().map(|p| p.weight).sum::<f64>() <= 0.0 {
        return Err(FilterError::Degenerate);
    }
    let posterior = Belief::new(weighted)?;
    // systematic (low-variance) resampling
    let resampled: Vec<M::State> = posterior
        .systematic_indices(particle_count, rng.random::<f64>())
        .into_iter()
        .map(|idx| posterior.particles()[idx].state.clone())
        .collect();
    Ok(Belief::uniform(resampled)?)
}

/// Full belief update: the domain's structured override when it has one,
/// otherwise the generic particle filter.
pub fn belief_update<M: BenchDomain>(
    model: &M,
    belief: &Belief<M::State>,
    action: usize,
    observation: &M::Observation,
    particle_count: usize,
    seed: u64,
) -> Result<Belief<M::State>, FilterError> {
    if let Some(result) =
        model.belief_update_override(belief, action, observation, particle_count, seed)
    {
        return Ok(result?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    particle_filter_update(model, belief, action, observation, particle_count, &mut rng)
}
