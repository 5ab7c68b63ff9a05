//! Weighted particle beliefs.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("belief must contain at least one particle")]
    Empty,
    #[error("particle weights must be finite and nonnegative")]
    InvalidWeight,
    #[error("total particle weight is zero")]
    ZeroMass,
}

/// One weighted state hypothesis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Particle<S> {
    pub state: S,
    pub weight: f64,
}

/// A normalized weighted particle set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Belief<S> {
    particles: Vec<Particle<S>>,
}

impl<S> Belief<S> {
    /// Builds a belief, normalizing weights to sum to one.
    pub fn new(mut particles: Vec<Particle<S>>) -> Result<Self, BeliefError> {
        if particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        let mut total = 0.0;
        for p in &particles {
            if !p.weight.is_finite() || p.weight < 0.0 {
                return Err(BeliefError::InvalidWeight);
            }
            total += p.weight;
        }
        if total <= 0.0 {
            return Err(BeliefError::ZeroMass);
        }
        for p in &mut particles {
            p.weight /= total;
        }
        Ok(Belief { particles })
    }

    /// Equal-weight belief over the given states.
    pub fn uniform(states: Vec<S>) -> Result<Self, BeliefError> {
        let n = states.len();
        Self::new(
            states
                .into_iter()
                .map(|state| Particle {
                    state,
                    weight: 1.0 / n as f64,
                })
                .collect(),
        )
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Index of the particle covering cumulative weight `u` in `[0, 1)`.
    pub fn index_at(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.particles.iter().enumerate() {
            acc += p.weight;
            if u < acc {
                return i;
            }
        }
        self.particles.len() - 1
    }

    /// Systematic (low-variance) resampling: particle indices at the `count`
    /// evenly spaced quantiles `(offset + i) / count`. Single pass over the
    /// CDF.
    pub fn systematic_indices(&self, count: usize, offset: f64) -> Vec<usize> {
        let mut indices = Vec::with_capacity(count);
        let mut idx = 0;
        let mut acc = self.particles[0].weight;
        for i in 0..count {
            let u = (offset + i as f64) / count as f64;
            while u >= acc && idx + 1 < self.particles.len() {
                idx += 1;
                acc += self.particles[idx].weight;
            }
            indices.push(idx);
        }
        indices
    }
}

impl<S: Serialize> Belief<S> {
    /// Serializes the particle set for harness checkpointing.
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&self.particles)
    }
}

impl<S: DeserializeOwned> Belief<S> {
    pub fn from_json(text: &str) -> Result<Self, BeliefError> {
        let particles: Vec<Particle<S>> =
            serde_json::from_str(text).map_err(|_| BeliefError::Empty)?;
        Belief::new(particles)
    }
}
