//! Exact Bayes filtering over enumerable models.

use despot_core::model::EnumerableModel;

/// `b'(s') ∝ O(s', a, z) Σ_s T(s, a, s') b(s)`. Returns `None` when the
/// observation has zero probability under the predicted belief.
pub fn posterior<M: EnumerableModel>(
    model: &M,
    prior: &[f64],
    action: usize,
    observation: &M::Observation,
) -> Option<Vec<f64>> {
    let states = model.enumerate_states();
    let observations = model.enumerate_observations();
    let z_index = observations
        .iter()
        .position(|z| z == observation)
        .expect("observation must be enumerated");
    assert_eq!(prior.len(), states.len());

    let mut predicted = vec![0.0; states.len()];
    for (i, state) in states.iter().enumerate() {
        if prior[i] == 0.0 {
            continue;
        }
        let row = model.transition_probabilities(state, action);
        for (j, p) in row.iter().enumerate() {
            predicted[j] += prior[i] * p;
        }
    }
    let mut post: Vec<f64> = states
        .iter()
        .enumerate()
        .map(|(j, next)| predicted[j] * model.observation_probabilities(next, action)[z_index])
        .collect();
    let total: f64 = post.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for p in &mut post {
        *p /= total;
    }
    Some(post)
}

/// Distribution over observations after taking `action` from `prior`.
pub fn predictive_observation<M: EnumerableModel>(
    model: &M,
    prior: &[f64],
    action: usize,
) -> Vec<f64> {
    let states = model.enumerate_states();
    let n_obs = model.enumerate_observations().len();
    let mut predicted = vec![0.0; states.len()];
    for (i, state) in states.iter().enumerate() {
        if prior[i] == 0.0 {
            continue;
        }
        let row = model.transition_probabilities(state, action);
        for (j, p) in row.iter().enumerate() {
            predicted[j] += prior[i] * p;
        }
    }
    let mut dist = vec![0.0; n_obs];
    for (j, next) in states.iter().enumerate() {
        if predicted[j] == 0.0 {
            continue;
        }
        for (z, p) in model.observation_probabilities(next, action).iter().enumerate() {
            dist[z] += predicted[j] * p;
        }
    }
    dist
}

/// Total variation distance between two distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
