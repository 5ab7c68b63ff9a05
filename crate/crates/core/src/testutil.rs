//! Tiny in-crate model and tree fabrication helpers for exercising the tree
//! and search machinery.

use crate::backend::{ActionSummary, ChildInit, ExpansionResult};
use crate::belief::Belief;
use crate::model::{assert_action, DespotModel, ModelSpec, StepOutcome};
use crate::rng::RandomStream;
use crate::scenario::sample_scenarios;
use crate::tree::{Bounds, Node, ObsKey, Tree};

/// 1-D corridor: two actions (left/right), slip probability 0.2, goal at +3
/// with reward 10, parity observation with 0.1 flip noise.
#[derive(Debug)]
pub struct LineModel {
    spec: ModelSpec,
}

pub const LINE_GOAL: i32 = 3;
const SLIP: f64 = 0.2;
const OBS_NOISE: f64 = 0.1;
const STEP_COST: f64 = -0.1;
const GOAL_REWARD: f64 = 10.0;

impl LineModel {
    pub fn new() -> Self {
        LineModel {
            spec: ModelSpec::new(2, 0.9, 6),
        }
    }
}

impl DespotModel for LineModel {
    type State = i32;
    type Observation = u8;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, state: &i32) -> bool {
        *state == LINE_GOAL
    }

    fn step(&self, state: &i32, action: usize, stream: &RandomStream, depth: u32) -> StepOutcome<i32, u8> {
        assert_action(&self.spec, action);
        let delta = if action == 0 { -1 } else { 1 };
        let next = if stream.bernoulli(depth, 0, SLIP) {
            *state
        } else {
            *state + delta
        };
        let terminal = next == LINE_GOAL;
        let reward = if terminal { GOAL_REWARD } else { STEP_COST };
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal }
    }

    fn observe(&self, next_state: &i32, _action: usize, stream: &RandomStream, depth: u32) -> u8 {
        let parity = (next_state.rem_euclid(2)) as u8;
        if stream.bernoulli(depth, 1, OBS_NOISE) {
            1 - parity
        } else {
            parity
        }
    }

    fn upper_bound_heuristic(&self, state: &i32) -> f64 {
        let dist = (LINE_GOAL - state).unsigned_abs();
        GOAL_REWARD * self.spec.discount.powi(dist.saturating_sub(1) as i32)
    }

    fn lower_bound_heuristic(&self, _state: &i32) -> f64 {
        STEP_COST / (1.0 - self.spec.discount)
    }

    fn default_policy_action(&self, _state: &i32, _depth: u32) -> usize {
        1
    }

    fn observation_likelihood(&self, next_state: &i32, _action: usize, observation: &u8) -> f64 {
        let parity = (next_state.rem_euclid(2)) as u8;
        if *observation == parity {
            1.0 - OBS_NOISE
        } else {
            OBS_NOISE
        }
    }
}

/// A fresh single-state tree over `k` scenarios with wide root bounds.
pub fn line_tree(k: usize) -> (LineModel, Tree<LineModel>) {
    let model = LineModel::new();
    let belief = Belief::uniform(vec![0i32]).unwrap();
    let scenarios = sample_scenarios(&belief, k, 7).unwrap();
    let tree = Tree::new(&model, scenarios);
    tree.initialize_root(Bounds { upper: 100.0, lower: -100.0 });
    (model, tree)
}

pub struct FakeChild {
    pub action: usize,
    pub obs: u8,
    pub ids: Vec<u32>,
    pub upper: f64,
    pub lower: f64,
}

/// Fabricates an expansion result; children must arrive sorted by
/// (action, obs) and partition the node's scenario set per action.
pub fn fake_result(
    node: &Node<LineModel>,
    mean_rewards: &[f64],
    children: Vec<FakeChild>,
) -> ExpansionResult<LineModel> {
    ExpansionResult {
        node_id: node.id(),
        updated_states: vec![0; node.scenario_count()],
        steps: Vec::new(),
        actions: mean_rewards
            .iter()
            .enumerate()
            .map(|(action, &mean_step_reward)| ActionSummary { action, mean_step_reward })
            .collect(),
        children: children
            .into_iter()
            .map(|c| ChildInit {
                action: c.action,
                observation: ObsKey::Obs(c.obs),
                terminal_flags: vec![false; c.ids.len()],
                scenario_ids: c.ids,
                upper: c.upper,
                lower: c.lower,
            })
            .collect(),
    }
}
