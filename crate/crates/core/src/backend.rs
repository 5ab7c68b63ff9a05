//! Batched leaf expansion and bound initialization behind a backend
//! abstraction.
//!
//! One expansion request is one schedulable task; within a request the
//! (action x scenario) pairs form a data-parallel loop. Requests submitted
//! from different tree workers may execute concurrently. Every backend must
//! produce bit-identical results for the same request: all reductions run in
//! ascending scenario-id order and every per-pair simulation is a pure
//! function of `(state, action, stream, depth)`.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::DespotModel;
use crate::scenario::Scenario;
use crate::tree::ObsKey;

#[derive(Debug, Error, PartialEq)]
pub enum BackendError {
    #[error("backend is shut down")]
    Terminated,
    #[error("unknown backend '{0}' (expected 'serial' or 'parallel')")]
    Unknown(String),
}

/// Immutable per-search context handed to the backend with each request.
pub struct SimContext<'a, M: DespotModel> {
    pub model: &'a M,
    pub scenarios: &'a [Scenario<M::State>],
    pub discount: f64,
    pub max_depth: u32,
}

/// Everything needed to expand one leaf.
pub struct ExpansionRequest<M: DespotModel> {
    pub node_id: u64,
    /// Depth of the node being expanded.
    pub depth: u32,
    /// The node's scenario ids, ascending.
    pub scenario_ids: Arc<[u32]>,
    /// Parent-depth states gathered for this node's scenarios.
    pub parent_states: Vec<M::State>,
    /// Scenario already terminal at this node.
    pub terminal_flags: Arc<[bool]>,
    /// Action to replay to bring `parent_states` to this node's depth.
    /// `None` when the states are already current (the root).
    pub last_action: Option<usize>,
}

/// Outcome of one (action, scenario) simulation.
#[derive(Debug)]
pub struct StepRecord<M: DespotModel> {
    pub scenario_id: u32,
    pub observation: ObsKey<M::Observation>,
    pub reward: f64,
    pub terminal: bool,
    pub next_state: M::State,
}

impl<M: DespotModel> Clone for StepRecord<M> {
    fn clone(&self) -> Self {
        StepRecord {
            scenario_id: self.scenario_id,
            observation: self.observation.clone(),
            reward: self.reward,
            terminal: self.terminal,
            next_state: self.next_state.clone(),
        }
    }
}

impl<M: DespotModel> PartialEq for StepRecord<M>
where
    M::State: PartialEq,
{
    fn eq(&self, other: &Self) -> bool {
        self.scenario_id == other.scenario_id
            && self.observation == other.observation
            && self.reward == other.reward
            && self.terminal == other.terminal
            && self.next_state == other.next_state
    }
}

/// Initialization data for one child node.
#[derive(Debug)]
pub struct ChildInit<M: DespotModel> {
    pub action: usize,
    pub observation: ObsKey<M::Observation>,
    pub scenario_ids: Vec<u32>,
    pub terminal_flags: Vec<bool>,
    pub upper: f64,
    pub lower: f64,
}

impl<M: DespotModel> Clone for ChildInit<M> {
    fn clone(&self) -> Self {
        ChildInit {
            action: self.action,
            observation: self.observation.clone(),
            scenario_ids: self.scenario_ids.clone(),
            terminal_flags: self.terminal_flags.clone(),
            upper: self.upper,
            lower: self.lower,
        }
    }
}

impl<M: DespotModel> PartialEq for ChildInit<M> {
    fn eq(&self, other: &Self) -> bool {
        self.action == other.action
            && self.observation == other.observation
            && self.scenario_ids == other.scenario_ids
            && self.terminal_flags == other.terminal_flags
            && self.upper == other.upper
            && self.lower == other.lower
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSummary {
    pub action: usize,
    pub mean_step_reward: f64,
}

/// Batched output of one leaf expansion.
#[derive(Debug)]
pub struct ExpansionResult<M: DespotModel> {
    pub node_id: u64,
    /// States materialized at the expanded node's depth.
    pub updated_states: Vec<M::State>,
    /// Per-action, per-scenario step outcomes, `steps[action][position]`.
    pub steps: Vec<Vec<StepRecord<M>>>,
    pub actions: Vec<ActionSummary>,
    /// Per-(action, observation) children, sorted by (action, key).
    pub children: Vec<ChildInit<M>>,
}

impl<M: DespotModel> Clone for ExpansionResult<M> {
    fn clone(&self) -> Self {
        ExpansionResult {
            node_id: self.node_id,
            updated_states: self.updated_states.clone(),
            steps: self.steps.clone(),
            actions: self.actions.clone(),
            children: self.children.clone(),
        }
    }
}

impl<M: DespotModel> PartialEq for ExpansionResult<M>
where
    M::State: PartialEq,
{
    fn eq(&self, other: &Self) -> bool {
        self.node_id == other.node_id
            && self.updated_states == other.updated_states
            && self.steps == other.steps
            && self.actions == other.actions
            && self.children == other.children
    }
}

/// Single-scenario default-policy rollout from `state` at `start_depth`,
/// truncated at `max_depth` with the model's lower-bound heuristic as tail
/// estimate. This is the one-scenario case of [`rollout_batch`].
pub fn rollout<M: DespotModel>(
    model: &M,
    state: &M::State,
    stream: &crate::rng::RandomStream,
    start_depth: u32,
    discount: f64,
    max_depth: u32,
) -> f64 {
    if model.is_terminal(state) {
        return 0.0;
    }
    let mut value = 0.0;
    let mut factor = 1.0;
    let mut current = state.clone();
    let mut depth = start_depth;
    while depth < max_depth {
        let action = model.default_policy_action(&current, depth);
        let out = model.step(&current, action, stream, depth + 1);
        value += factor * out.reward;
        factor *= discount;
        current = out.next_state;
        depth += 1;
        if out.terminal {
            return value;
        }
    }
    value + factor * model.lower_bound_heuristic(&current)
}

/// Batched default-policy rollout: the whole scenario set follows ONE shared
/// action sequence, chosen per step from a deterministic representative (the
/// lowest-positioned live scenario). A per-scenario policy would adapt to
/// each scenario's hidden state and overshoot the achievable belief value,
/// crossing the upper bound. Returns the scenario-mean discounted return,
/// with already-terminal scenarios contributing zero and the depth-capped
/// tail estimated by the lower-bound heuristic. Sums fold in ascending
/// scenario position.
pub fn rollout_batch<M: DespotModel>(
    ctx: &SimContext<'_, M>,
    states: &[M::State],
    flags: &[bool],
    ids: &[u32],
    start_depth: u32,
) -> f64 {
    let n = states.len();
    debug_assert_eq!(flags.len(), n);
    debug_assert_eq!(ids.len(), n);
    let mut current: Vec<M::State> = states.to_vec();
    let mut live: Vec<bool> = flags.iter().map(|&f| !f).collect();
    let mut value = 0.0;
    let mut factor = 1.0;
    let mut depth = start_depth;
    while depth < ctx.max_depth {
        let Some(rep) = live.iter().position(|&l| l) else { break };
        let action = ctx.model.default_policy_action(&current[rep], depth);
        let mut reward_sum = 0.0;
        for pos in 0..n {
            if !live[pos] {
                continue;
            }
            let stream = &ctx.scenarios[ids[pos] as usize].stream;
            let out = ctx.model.step(&current[pos], action, stream, depth + 1);
            reward_sum += out.reward;
            current[pos] = out.next_state;
            if out.terminal {
                live[pos] = false;
            }
        }
        value += factor * reward_sum;
        factor *= ctx.discount;
        depth += 1;
    }
    let mut tail = 0.0;
    for pos in 0..n {
        if live[pos] {
            tail += ctx.model.lower_bound_heuristic(&current[pos]);
        }
    }
    (value + factor * tail) / n as f64
}

struct PairValue<M: DespotModel> {
    record: StepRecord<M>,
    child_upper: f64,
}

/// Simulates one (action, scenario-position) pair and computes the child-side
/// initial bound contributions. `composed` selects the factored step route.
#[allow(clippy::too_many_arguments)]
fn simulate_pair<M: DespotModel>(
    ctx: &SimContext<'_, M>,
    states: &[M::State],
    flags: &[bool],
    ids: &[u32],
    action: usize,
    pos: usize,
    child_depth: u32,
    composed: bool,
) -> PairValue<M> {
    let id = ids[pos];
    if flags[pos] {
        // Already terminal: uniform batch shape, zero future value.
        return PairValue {
            record: StepRecord {
                scenario_id: id,
                observation: ObsKey::Terminal,
                reward: 0.0,
                terminal: true,
                next_state: states[pos].clone(),
            },
            child_upper: 0.0,
        };
    }
    let stream = &ctx.scenarios[id as usize].stream;
    let out = if composed {
        ctx.model.step_composed(&states[pos], action, stream, child_depth)
    } else {
        ctx.model.step(&states[pos], action, stream, child_depth)
    };
    let child_upper = if out.terminal {
        0.0
    } else {
        ctx.model.upper_bound_heuristic(&out.next_state)
    };
    PairValue {
        record: StepRecord {
            scenario_id: id,
            observation: ObsKey::Obs(out.observation),
            reward: out.reward,
            terminal: out.terminal,
            next_state: out.next_state,
        },
        child_upper,
    }
}

/// Replays the pending action on one gathered parent state.
fn update_state<M: DespotModel>(
    ctx: &SimContext<'_, M>,
    state: &M::State,
    flag: bool,
    id: u32,
    action: Option<usize>,
    depth: u32,
    composed: bool,
) -> M::State {
    match action {
        Some(a) if !flag => {
            let stream = &ctx.scenarios[id as usize].stream;
            if composed {
                ctx.model.step_composed(state, a, stream, depth).next_state
            } else {
                ctx.model.step(state, a, stream, depth).next_state
            }
        }
        _ => state.clone(),
    }
}

/// A grouped child before its rollout lower bound is computed.
struct ChildDraft<M: DespotModel> {
    action: usize,
    observation: ObsKey<M::Observation>,
    scenario_ids: Vec<u32>,
    terminal_flags: Vec<bool>,
    states: Vec<M::State>,
    upper: f64,
}

impl<M: DespotModel> ChildDraft<M> {
    fn finish(self, lower: f64) -> ChildInit<M> {
        ChildInit {
            action: self.action,
            observation: self.observation,
            scenario_ids: self.scenario_ids,
            terminal_flags: self.terminal_flags,
            upper: self.upper,
            lower,
        }
    }
}

/// Groups per-pair results into child drafts and action summaries. All sums
/// fold in ascending scenario order, so the output is a pure function of the
/// per-pair values regardless of how they were computed.
type Grouped<M> = (Vec<Vec<StepRecord<M>>>, Vec<ActionSummary>, Vec<ChildDraft<M>>);

fn group_children<M: DespotModel>(per_action: &[Vec<PairValue<M>>]) -> Grouped<M> {
    let mut steps = Vec::with_capacity(per_action.len());
    let mut actions = Vec::with_capacity(per_action.len());
    let mut drafts = Vec::new();
    for (action, pairs) in per_action.iter().enumerate() {
        let n = pairs.len() as f64;
        let mut reward_sum = 0.0;
        // Group scenario positions by observation key, ascending.
        let mut groups: std::collections::BTreeMap<ObsKey<M::Observation>, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (pos, pair) in pairs.iter().enumerate() {
            reward_sum += pair.record.reward;
            groups.entry(pair.record.observation.clone()).or_default().push(pos);
        }
        for (observation, positions) in groups {
            let mut upper_sum = 0.0;
            let mut scenario_ids = Vec::with_capacity(positions.len());
            let mut terminal_flags = Vec::with_capacity(positions.len());
            let mut states = Vec::with_capacity(positions.len());
            for &pos in &positions {
                upper_sum += pairs[pos].child_upper;
                scenario_ids.push(pairs[pos].record.scenario_id);
                terminal_flags.push(pairs[pos].record.terminal);
                states.push(pairs[pos].record.next_state.clone());
            }
            let m = positions.len() as f64;
            drafts.push(ChildDraft {
                action,
                observation,
                scenario_ids,
                terminal_flags,
                states,
                upper: upper_sum / m,
            });
        }
        actions.push(ActionSummary {
            action,
            mean_step_reward: reward_sum / n,
        });
        steps.push(pairs.iter().map(|p| p.record.clone()).collect());
    }
    (steps, actions, drafts)
}

/// Roll-out task for one child draft: its scenarios share an action sequence
/// starting at the child's depth.
fn draft_lower<M: DespotModel>(ctx: &SimContext<'_, M>, draft: &ChildDraft<M>, child_depth: u32) -> f64 {
    rollout_batch(
        ctx,
        &draft.states,
        &draft.terminal_flags,
        &draft.scenario_ids,
        child_depth,
    )
}

/// Reference implementation of the three expansion tasks (update, expansion,
/// roll-out) as plain serial loops.
pub fn expand_and_initialize<M: DespotModel>(
    request: &ExpansionRequest<M>,
    ctx: &SimContext<'_, M>,
) -> ExpansionResult<M> {
    let ids = &request.scenario_ids;
    let flags = &request.terminal_flags;
    assert_eq!(request.parent_states.len(), ids.len());
    let updated: Vec<M::State> = request
        .parent_states
        .iter()
        .enumerate()
        .map(|(pos, s)| {
            update_state(ctx, s, flags[pos], ids[pos], request.last_action, request.depth, false)
        })
        .collect();
    let action_count = ctx.model.spec().action_count;
    let child_depth = request.depth + 1;
    let per_action: Vec<Vec<PairValue<M>>> = (0..action_count)
        .map(|action| {
            (0..ids.len())
                .map(|pos| {
                    simulate_pair(ctx, &updated, flags, ids, action, pos, child_depth, false)
                })
                .collect()
        })
        .collect();
    let (steps, actions, drafts) = group_children(&per_action);
    let children = drafts
        .into_iter()
        .map(|draft| {
            let lower = draft_lower(ctx, &draft, child_depth);
            draft.finish(lower)
        })
        .collect();
    ExpansionResult {
        node_id: request.node_id,
        updated_states: updated,
        steps,
        actions,
        children,
    }
}

/// Initial bounds for a node whose states are already materialized: the
/// scenario-mean of the upper-bound heuristic, and one shared-action batch
/// rollout for the lower side. Terminal scenarios contribute zero.
pub fn initialize_bounds<M: DespotModel>(
    ctx: &SimContext<'_, M>,
    states: &[M::State],
    flags: &[bool],
    ids: &[u32],
    depth: u32,
) -> (f64, f64) {
    let mut upper_sum = 0.0;
    for (pos, state) in states.iter().enumerate() {
        if !flags[pos] {
            upper_sum += ctx.model.upper_bound_heuristic(state);
        }
    }
    let lower = rollout_batch(ctx, states, flags, ids, depth);
    (upper_sum / states.len() as f64, lower)
}

/// Per-backend counters exported for the harness's profiling output.
#[derive(Clone, Copy, Debug, Default)]
pub struct BackendTiming {
    pub requests: u64,
    pub busy_nanos: u64,
}

#[derive(Default)]
struct BackendState {
    shut_down: AtomicBool,
    requests: AtomicU64,
    busy_nanos: AtomicU64,
}

impl BackendState {
    fn guard(&self) -> Result<Instant, BackendError> {
        if self.shut_down.load(Ordering::SeqCst) {
            return Err(BackendError::Terminated);
        }
        Ok(Instant::now())
    }

    fn record(&self, start: Instant) {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.busy_nanos
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }

    fn timing(&self) -> BackendTiming {
        BackendTiming {
            requests: self.requests.load(Ordering::Relaxed),
            busy_nanos: self.busy_nanos.load(Ordering::Relaxed),
        }
    }
}

/// A thread-safe expansion service. `submit` blocks the calling worker until
/// the result is ready; submissions from different workers run concurrently.
pub trait SimulationBackend<M: DespotModel>: Send + Sync {
    fn name(&self) -> &'static str;
    fn submit(
        &self,
        request: &ExpansionRequest<M>,
        ctx: &SimContext<'_, M>,
    ) -> Result<ExpansionResult<M>, BackendError>;
    fn timing(&self) -> BackendTiming;
    /// After shutdown every submit fails with [`BackendError::Terminated`].
    fn shutdown(&self);
}

/// Straight-loop reference backend.
#[derive(Default)]
pub struct SerialBackend {
    state: BackendState,
}

impl SerialBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<M: DespotModel> SimulationBackend<M> for SerialBackend {
    fn name(&self) -> &'static str {
        "serial"
    }

    fn submit(
        &self,
        request: &ExpansionRequest<M>,
        ctx: &SimContext<'_, M>,
    ) -> Result<ExpansionResult<M>, BackendError> {
        let start = self.state.guard()?;
        let result = expand_and_initialize(request, ctx);
        self.state.record(start);
        Ok(result)
    }

    fn timing(&self) -> BackendTiming {
        self.state.timing()
    }

    fn shutdown(&self) {
        self.state.shut_down.store(true, Ordering::SeqCst);
    }
}

/// Data-parallel backend: the (action x scenario) pair loop runs on the rayon
/// pool and factored models step through the composed element route. Results
/// are collected positionally and reduced in ascending scenario order, so the
/// output is bit-identical to [`SerialBackend`].
#[derive(Default)]
pub struct ParallelBackend {
    state: BackendState,
}

impl ParallelBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<M: DespotModel> SimulationBackend<M> for ParallelBackend {
    fn name(&self) -> &'static str {
        "parallel"
    }

    fn submit(
        &self,
        request: &ExpansionRequest<M>,
        ctx: &SimContext<'_, M>,
    ) -> Result<ExpansionResult<M>, BackendError> {
        let start = self.state.guard()?;
        let ids = &request.scenario_ids;
        let flags = &request.terminal_flags;
        assert_eq!(request.parent_states.len(), ids.len());
        let composed = ctx.model.spec().factored_element_count > 1;
        let updated: Vec<M::State> = request
            .parent_states
            .par_iter()
            .enumerate()
            .map(|(pos, s)| {
                update_state(
                    ctx,
                    s,
                    flags[pos],
                    ids[pos],
                    request.last_action,
                    request.depth,
                    composed,
                )
            })
            .collect();
        let action_count = ctx.model.spec().action_count;
        let child_depth = request.depth + 1;
        let n = ids.len();
        let mut flat: Vec<PairValue<M>> = (0..action_count * n)
            .into_par_iter()
            .map(|idx| {
                let action = idx / n;
                let pos = idx % n;
                simulate_pair(ctx, &updated, flags, ids, action, pos, child_depth, composed)
            })
            .collect();
        let mut per_action: Vec<Vec<PairValue<M>>> = Vec::with_capacity(action_count);
        for _ in 0..action_count {
            let rest = flat.split_off(n);
            per_action.push(flat);
            flat = rest;
        }
        let (steps, actions, drafts) = group_children(&per_action);
        let lowers: Vec<f64> = drafts
            .par_iter()
            .map(|draft| draft_lower(ctx, draft, child_depth))
            .collect();
        let children = drafts
            .into_iter()
            .zip(lowers)
            .map(|(draft, lower)| draft.finish(lower))
            .collect();
        let result = ExpansionResult {
            node_id: request.node_id,
            updated_states: updated,
            steps,
            actions,
            children,
        };
        self.state.record(start);
        Ok(result)
    }

    fn timing(&self) -> BackendTiming {
        self.state.timing()
    }

    fn shutdown(&self) {
        self.state.shut_down.store(true, Ordering::SeqCst);
    }
}

/// Backend selection by config string.
pub fn backend_from_name<M: DespotModel>(
    name: &str,
) -> Result<Box<dyn SimulationBackend<M>>, BackendError> {
    match name {
        "serial" => Ok(Box::new(SerialBackend::new())),
        "parallel" => Ok(Box::new(ParallelBackend::new())),
        other => Err(BackendError::Unknown(other.to_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Belief;
    use crate::model::DespotModel;
    use crate::rng::RandomStream;
    use crate::scenario::sample_scenarios;
    use crate::testutil::{LineModel, LINE_GOAL};

    fn line_setup(k: usize) -> (LineModel, Vec<Scenario<i32>>) {
        let model = LineModel::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let scenarios = sample_scenarios(&belief, k, 3).unwrap();
        (model, scenarios)
    }

    fn ctx<'a>(model: &'a LineModel, scenarios: &'a [Scenario<i32>]) -> SimContext<'a, LineModel> {
        SimContext { model, scenarios, discount: 0.9, max_depth: 6 }
    }

    fn request(states: Vec<i32>, flags: Vec<bool>, last_action: Option<usize>, depth: u32) -> ExpansionRequest<LineModel> {
        let n = states.len();
        ExpansionRequest {
            node_id: 9,
            depth,
            scenario_ids: (0..n as u32).collect::<Vec<_>>().into(),
            parent_states: states,
            terminal_flags: flags.into(),
            last_action,
        }
    }

    #[test]
    fn rollout_from_terminal_is_zero() {
        let (model, scenarios) = line_setup(1);
        let v = rollout(&model, &LINE_GOAL, &scenarios[0].stream, 0, 0.9, 6);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rollout_depth_one_is_reward_plus_discounted_tail() {
        let (model, scenarios) = line_setup(1);
        let stream = &scenarios[0].stream;
        let state = 0i32;
        let action = model.default_policy_action(&state, 0);
        let out = model.step(&state, action, stream, 1);
        let expect = if out.terminal {
            out.reward
        } else {
            out.reward + 0.9 * model.lower_bound_heuristic(&out.next_state)
        };
        let got = rollout(&model, &state, stream, 0, 0.9, 1);
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn rollout_at_cap_returns_tail_estimate() {
        let (model, scenarios) = line_setup(1);
        let got = rollout(&model, &0, &scenarios[0].stream, 6, 0.9, 6);
        assert_eq!(got, model.lower_bound_heuristic(&0));
    }

    #[test]
    fn expansion_shape_two_actions_one_scenario() {
        let (model, scenarios) = line_setup(1);
        let req = request(vec![0], vec![false], None, 0);
        let res = expand_and_initialize(&req, &ctx(&model, &scenarios));
        assert_eq!(res.steps.len(), 2);
        assert_eq!(res.steps[0].len(), 1);
        assert_eq!(res.steps[1].len(), 1);
        assert!(res.children.len() <= 2);
        assert_eq!(res.actions.len(), 2);
        for child in &res.children {
            assert!(child.lower <= child.upper + 1e-9);
        }
    }

    #[test]
    fn all_terminal_scenarios_become_zero_children() {
        let (model, scenarios) = line_setup(3);
        let req = request(vec![LINE_GOAL; 3], vec![true; 3], Some(1), 2);
        let res = expand_and_initialize(&req, &ctx(&model, &scenarios));
        for summary in &res.actions {
            assert_eq!(summary.mean_step_reward, 0.0);
        }
        for child in &res.children {
            assert_eq!(child.observation, ObsKey::Terminal);
            assert_eq!(child.upper, 0.0);
            assert_eq!(child.lower, 0.0);
            assert!(child.terminal_flags.iter().all(|&f| f));
        }
        // states pass through untouched
        assert_eq!(res.updated_states, vec![LINE_GOAL; 3]);
    }

    #[test]
    fn children_partition_scenarios_per_action() {
        let (model, scenarios) = line_setup(16);
        let req = request(vec![1; 16], vec![false; 16], Some(1), 1);
        let res = expand_and_initialize(&req, &ctx(&model, &scenarios));
        for action in 0..2 {
            let mut seen: Vec<u32> = res
                .children
                .iter()
                .filter(|c| c.action == action)
                .flat_map(|c| c.scenario_ids.iter().copied())
                .collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..16u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn serial_and_parallel_backends_are_bit_identical() {
        let (model, scenarios) = line_setup(32);
        let serial = SerialBackend::new();
        let parallel = ParallelBackend::new();
        let stream = RandomStream::new(777);
        for case in 0..50u32 {
            let k = 1 + stream.index(case, 0, 32);
            let states: Vec<i32> = (0..k).map(|i| stream.index(case, 10 + i as u32, 5) as i32 - 2).collect();
            let flags: Vec<bool> = (0..k).map(|i| stream.bernoulli(case, 50 + i as u32, 0.2)).collect();
            let last_action = if stream.bernoulli(case, 99, 0.5) { Some(stream.index(case, 98, 2)) } else { None };
            let depth = stream.index(case, 97, 4) as u32;
            let mk = || ExpansionRequest::<LineModel> {
                node_id: case as u64,
                depth,
                scenario_ids: (0..k as u32).collect::<Vec<_>>().into(),
                parent_states: states.clone(),
                terminal_flags: flags.clone().into(),
                last_action,
            };
            let c = ctx(&model, &scenarios);
            let a = SimulationBackend::<LineModel>::submit(&serial, &mk(), &c).unwrap();
            let b = SimulationBackend::<LineModel>::submit(&parallel, &mk(), &c).unwrap();
            assert_eq!(a, b, "case {case}");
        }
        let t = SimulationBackend::<LineModel>::timing(&serial);
        assert_eq!(t.requests, 50);
    }

    #[test]
    fn concurrent_submissions_match_serial() {
        let (model, scenarios) = line_setup(8);
        let parallel = ParallelBackend::new();
        let serial = SerialBackend::new();
        let req = || request(vec![0; 8], vec![false; 8], Some(1), 1);
        let want = SimulationBackend::<LineModel>::submit(&serial, &req(), &ctx(&model, &scenarios)).unwrap();
        std::thread::scope(|scope| {
            for _ in 0..8 {
                let model = &model;
                let scenarios = &scenarios;
                let parallel = &parallel;
                let want = &want;
                scope.spawn(move || {
                    let got = SimulationBackend::<LineModel>::submit(
                        parallel,
                        &req(),
                        &ctx(model, scenarios),
                    )
                    .unwrap();
                    assert_eq!(&got, want);
                });
            }
        });
    }

    #[test]
    fn initialize_bounds_matches_direct_loop() {
        let (model, scenarios) = line_setup(16);
        let states: Vec<i32> = (0..16).map(|i| (i % 5) - 2).collect();
        let flags = vec![false; 16];
        let ids: Vec<u32> = (0..16).collect();
        let c = ctx(&model, &scenarios);
        let (u, l) = initialize_bounds(&c, &states, &flags, &ids, 0);
        let mut us = 0.0;
        let mut ls = 0.0;
        for (i, s) in states.iter().enumerate() {
            us += model.upper_bound_heuristic(s);
            ls += rollout(&model, s, &scenarios[i].stream, 0, 0.9, 6);
        }
        assert!((u - us / 16.0).abs() < 1e-12);
        assert!((l - ls / 16.0).abs() < 1e-12);
    }

    #[test]
    fn shutdown_terminates_submissions() {
        let (model, scenarios) = line_setup(2);
        let backend = SerialBackend::new();
        SimulationBackend::<LineModel>::shutdown(&backend);
        let req = request(vec![0, 0], vec![false, false], None, 0);
        let err = SimulationBackend::<LineModel>::submit(&backend, &req, &ctx(&model, &scenarios));
        assert!(matches!(err, Err(BackendError::Terminated)));
    }

    #[test]
    fn backend_from_name_selects() {
        assert_eq!(
            SimulationBackend::<LineModel>::name(&*backend_from_name::<LineModel>("serial").unwrap()),
            "serial"
        );
        assert_eq!(
            SimulationBackend::<LineModel>::name(&*backend_from_name::<LineModel>("parallel").unwrap()),
            "parallel"
        );
        assert!(matches!(
            backend_from_name::<LineModel>("gpu"),
            Err(BackendError::Unknown(_))
        ));
    }
}
