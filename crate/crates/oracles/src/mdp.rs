//! Explicit-MDP value iteration.

/// A fully enumerated MDP. `transitions[s][a]` lists `(next_state, prob)`
/// pairs; `rewards[s][a]` is the expected immediate reward; terminal states
/// have value zero and their outgoing entries are ignored.
pub struct ExplicitMdp {
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
    pub terminal: Vec<bool>,
}

impl ExplicitMdp {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    /// Optimal values by value iteration to the given sup-norm tolerance.
    pub fn optimal_values(&self, discount: f64, tolerance: f64) -> Vec<f64> {
        let n = self.state_count();
        let mut values = vec![0.0; n];
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            let mut next = vec![0.0; n];
            for s in 0..n {
                if self.terminal[s] {
                    continue;
                }
                let mut best = f64::NEG_INFINITY;
                for (a, outcomes) in self.transitions[s].iter().enumerate() {
                    let mut q = self.rewards[s][a];
                    for &(sp, p) in outcomes {
                        q += discount * p * values[sp];
                    }
                    best = best.max(q);
                }
                next[s] = best;
                delta = delta.max((best - values[s]).abs());
            }
            values = next;
            if delta < tolerance {
                return values;
            }
        }
        panic!("value iteration did not converge");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_chain_has_geometric_value() {
        // state 0 -> state 1 (terminal) with reward 1; discount 0.5
        let mdp = ExplicitMdp {
            transitions: vec![vec![vec![(1, 1.0)]], vec![vec![]]],
            rewards: vec![vec![1.0], vec![0.0]],
            terminal: vec![false, true],
        };
        let v = mdp.optimal_values(0.5, 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-9);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn self_loop_accumulates_discounted_reward() {
        let mdp = ExplicitMdp {
            transitions: vec![vec![vec![(0, 1.0)]]],
            rewards: vec![vec![1.0]],
            terminal: vec![false],
        };
        let v = mdp.optimal_values(0.9, 1e-12);
        assert!((v[0] - 10.0).abs() < 1e-6);
    }
}
