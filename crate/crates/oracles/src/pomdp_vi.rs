//! Exact finite-horizon POMDP value iteration by alpha-vector enumeration.
//!
//! Practical only for tiny models (the tiger diagnostic). Every backup
//! enumerates all successor-vector assignments per action and prunes the
//! candidate set; for two-state models the surviving set is reduced to the
//! exact upper envelope of value lines.

use despot_core::model::EnumerableModel;

#[derive(Clone, Debug)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

/// The horizon-`h` optimal value function as a max over alpha vectors.
pub struct AlphaPolicy {
    pub vectors: Vec<AlphaVector>,
}

impl AlphaPolicy {
    pub fn value(&self, belief: &[f64]) -> f64 {
        self.vectors
            .iter()
            .map(|v| dot(&v.values, belief))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Optimal first action; ties break to the lowest action index.
    pub fn best_action(&self, belief: &[f64]) -> usize {
        let mut best_value = f64::NEG_INFINITY;
        let mut best_action = 0;
        for v in &self.vectors {
            let value = dot(&v.values, belief);
            if value > best_value + 1e-12
                || (value > best_value - 1e-12 && v.action < best_action)
            {
                best_value = value.max(best_value);
                best_action = v.action;
            }
        }
        best_action
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact finite-horizon solve to the given horizon.
pub fn solve<M: EnumerableModel>(model: &M, horizon: u32) -> AlphaPolicy {
    let states = model.enumerate_states();
    let observations = model.enumerate_observations();
    let n = states.len();
    let n_obs = observations.len();
    let actions = model.spec().action_count;
    let discount = model.spec().discount;

    // cache the model tables
    let reward: Vec<Vec<f64>> = states
        .iter()
        .map(|s| (0..actions).map(|a| model.expected_reward(s, a)).collect())
        .collect();
    let terminates: Vec<Vec<bool>> = states
        .iter()
        .map(|s| (0..actions).map(|a| model.terminates(s, a)).collect())
        .collect();
    let transition: Vec<Vec<Vec<f64>>> = states
        .iter()
        .map(|s| {
            (0..actions)
                .map(|a| model.transition_probabilities(s, a))
                .collect()
        })
        .collect();
    let observation: Vec<Vec<Vec<f64>>> = states
        .iter()
        .map(|sp| {
            (0..actions)
                .map(|a| model.observation_probabilities(sp, a))
                .collect()
        })
        .collect();

    let mut gamma = vec![AlphaVector { action: 0, values: vec![0.0; n] }];
    for _ in 0..horizon {
        let mut candidates = Vec::new();
        for a in 0..actions {
            // enumerate successor-vector assignments sigma: Z -> gamma
            let assignments = (gamma.len() as u64).pow(n_obs as u32);
            assert!(assignments <= 1_000_000, "alpha set exploded; prune harder");
            for code in 0..assignments {
                let mut sigma = Vec::with_capacity(n_obs);
                let mut rem = code;
                for _ in 0..n_obs {
                    sigma.push((rem % gamma.len() as u64) as usize);
                    rem /= gamma.len() as u64;
                }
                let values: Vec<f64> = (0..n)
                    .map(|s| {
                        let mut v = reward[s][a];
                        if !terminates[s][a] {
                            for (sp, &t) in transition[s][a].iter().enumerate() {
                                if t == 0.0 {
                                    continue;
                                }
                                for (z, &o) in observation[sp][a].iter().enumerate() {
                                    if o == 0.0 {
                                        continue;
                                    }
                                    v += discount * t * o * gamma[sigma[z]].values[sp];
                                }
                            }
                        }
                        v
                    })
                    .collect();
                candidates.push(AlphaVector { action: a, values });
            }
        }
        gamma = prune(candidates, n);
    }
    AlphaPolicy { vectors: gamma }
}

fn prune(mut candidates: Vec<AlphaVector>, n: usize) -> Vec<AlphaVector> {
    // drop exact duplicates and pointwise-dominated vectors
    candidates.sort_by(|a, b| {
        a.values
            .partial_cmp(&b.values)
            .unwrap()
            .then(a.action.cmp(&b.action))
    });
    candidates.dedup_by(|a, b| a.values == b.values);
    let mut kept: Vec<AlphaVector> = Vec::new();
    'outer: for cand in candidates {
        let mut i = 0;
        while i < kept.len() {
            if dominates(&kept[i].values, &cand.values) {
                continue 'outer;
            }
            if dominates(&cand.values, &kept[i].values) {
                kept.swap_remove(i);
            } else {
                i += 1;
            }
        }
        kept.push(cand);
    }
    if n == 2 {
        upper_envelope_2d(kept)
    } else {
        kept
    }
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Exact upper envelope for two-state models: each vector is the line
/// `y(p) = p * values[0] + (1 - p) * values[1]` over `p` in [0, 1]. Standard
/// hull construction over lines sorted by slope, then clipped to [0, 1].
fn upper_envelope_2d(mut vectors: Vec<AlphaVector>) -> Vec<AlphaVector> {
    let slope = |v: &AlphaVector| v.values[0] - v.values[1];
    let offset = |v: &AlphaVector| v.values[1];
    // slope ascending; among equal slopes keep the highest offset
    vectors.sort_by(|a, b| {
        slope(a)
            .partial_cmp(&slope(b))
            .unwrap()
            .then(offset(a).partial_cmp(&offset(b)).unwrap())
    });
    vectors.dedup_by(|next, prev| {
        if (slope(next) - slope(prev)).abs() < 1e-12 {
            if offset(next) > offset(prev) {
                std::mem::swap(next, prev);
            }
            true
        } else {
            false
        }
    });
    // crossing abscissa of two lines with distinct slopes
    let cross = |a: &AlphaVector, b: &AlphaVector| (offset(b) - offset(a)) / (slope(a) - slope(b));
    let mut hull: Vec<AlphaVector> = Vec::new();
    for line in vectors {
        while hull.len() >= 2 {
            let last = &hull[hull.len() - 1];
            let before = &hull[hull.len() - 2];
            // the middle line never reaches the top once the new line crosses
            // the one below it first
            if cross(&line, before) <= cross(last, before) {
                hull.pop();
            } else {
                break;
            }
        }
        if hull.len() == 1 && (slope(&line) - slope(&hull[0])).abs() < 1e-12 {
            hull.pop();
        }
        hull.push(line);
    }
    // clip active intervals to [0, 1]
    let mut kept = Vec::new();
    for i in 0..hull.len() {
        let from = if i == 0 { f64::NEG_INFINITY } else { cross(&hull[i], &hull[i - 1]) };
        let to = if i + 1 == hull.len() { f64::INFINITY } else { cross(&hull[i], &hull[i + 1]) };
        if to >= -1e-12 && from <= 1.0 + 1e-12 {
            kept.push(hull[i].clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use despot_core::model::{DespotModel, ModelSpec, StepOutcome};
    use despot_core::rng::RandomStream;

    /// Two-state, one-action chain paying 1 in state 0, for a closed-form
    /// horizon value check.
    #[derive(Debug)]
    struct TrivialModel {
        spec: ModelSpec,
    }

    impl DespotModel for TrivialModel {
        type State = usize;
        type Observation = u8;
        fn spec(&self) -> &ModelSpec {
            &self.spec
        }
        fn is_terminal(&self, _: &usize) -> bool {
            false
        }
        fn step(&self, s: &usize, _: usize, _: &RandomStream, _: u32) -> StepOutcome<usize, u8> {
            StepOutcome { next_state: *s, observation: 0, reward: 0.0, terminal: false }
        }
        fn observe(&self, _: &usize, _: usize, _: &RandomStream, _: u32) -> u8 {
            0
        }
        fn upper_bound_heuristic(&self, _: &usize) -> f64 {
            0.0
        }
        fn default_policy_action(&self, _: &usize, _: u32) -> usize {
            0
        }
        fn observation_likelihood(&self, _: &usize, _: usize, _: &u8) -> f64 {
            1.0
        }
    }

    impl despot_core::model::EnumerableModel for TrivialModel {
        fn enumerate_states(&self) -> Vec<usize> {
            vec![0, 1]
        }
        fn enumerate_observations(&self) -> Vec<u8> {
            vec![0]
        }
        fn expected_reward(&self, s: &usize, _: usize) -> f64 {
            if *s == 0 { 1.0 } else { 0.0 }
        }
        fn terminates(&self, _: &usize, _: usize) -> bool {
            false
        }
        fn transition_probabilities(&self, s: &usize, _: usize) -> Vec<f64> {
            if *s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
        }
        fn observation_probabilities(&self, _: &usize, _: usize) -> Vec<f64> {
            vec![1.0]
        }
    }

    #[test]
    fn horizon_sum_matches_geometric_series() {
        let model = TrivialModel { spec: ModelSpec::new(1, 0.5, 10) };
        let policy = solve(&model, 5);
        // from state 0: 1 + .5 + .25 + .125 + .0625
        let v = policy.value(&[1.0, 0.0]);
        assert!((v - 1.9375).abs() < 1e-12);
        assert_eq!(policy.value(&[0.0, 1.0]), 0.0);
    }
}
