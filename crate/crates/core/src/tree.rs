//! The sparse scenario belief tree.
//!
//! Nodes hold the subset of scenarios that visit them, upper/lower bounds on
//! the value from that node, visitation counters, and per-action branches
//! keyed by observation. Each node carries its own mutex guarding bounds,
//! branch bounds, and structure, plus lock-free atomic counters for
//! visitation statistics and traversal markers. The search modules supply
//! the mutation discipline; this module only enforces local invariants.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use serde_json::json;

use crate::backend::ExpansionResult;
use crate::model::DespotModel;
use crate::scenario::Scenario;

/// Slack allowed on the `lower <= upper` ordering before it is treated as a
/// violation.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Upper and lower bounds on the value of a node or branch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub upper: f64,
    pub lower: f64,
}

impl Bounds {
    pub fn new(upper: f64, lower: f64) -> Self {
        let b = Bounds { upper, lower };
        debug_assert!(b.is_ordered(), "bounds out of order: {b:?}");
        b
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_ordered(&self) -> bool {
        self.lower <= self.upper + BOUND_TOLERANCE
    }
}

/// Branch key: observations are hashable keys, plus a designated bucket for
/// scenarios that were already terminal when the branch was created. The
/// terminal bucket sorts before every real observation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObsKey<Z> {
    Terminal,
    Obs(Z),
}

impl<Z: std::fmt::Debug> ObsKey<Z> {
    pub fn label(&self) -> String {
        match self {
            ObsKey::Terminal => "<terminal>".to_owned(),
            ObsKey::Obs(z) => format!("{z:?}"),
        }
    }
}

/// Expansion lifecycle of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Created, bounds initialized, not yet expanded.
    Leaf,
    /// An expansion is in flight; exactly one worker holds the claim.
    Claimed,
    Expanded,
}

/// Result of a claim attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClaimOutcome {
    Claimed,
    Busy,
    AlreadyExpanded,
}

/// An observation-keyed child edge.
pub type ChildEdge<M> =
    (ObsKey<<M as DespotModel>::Observation>, Arc<Node<M>>);

/// Per-action edge under a node.
pub struct Branch<M: DespotModel> {
    pub action: usize,
    pub mean_step_reward: f64,
    /// N(b, a): trials that descended through this branch.
    pub visits: AtomicU64,
    pub bounds: Bounds,
    /// Children keyed by observation, ascending key order.
    pub children: Vec<ChildEdge<M>>,
}

pub(crate) struct NodeInner<M: DespotModel> {
    pub bounds: Bounds,
    pub init_bounds: Bounds,
    pub stage: Stage,
    /// Per-scenario states at this node's depth; materialized at expansion.
    pub states: Option<Arc<Vec<M::State>>>,
    pub branches: Vec<Branch<M>>,
}

/// One belief node.
pub struct Node<M: DespotModel> {
    id: u64,
    depth: u32,
    /// Indices into the root scenario list, ascending.
    scenario_ids: Arc<[u32]>,
    /// Aligned to `scenario_ids`: scenario already terminal at this node.
    terminal_flags: Arc<[bool]>,
    /// All scenarios terminal: the node's value is exactly zero.
    terminal: bool,
    incoming: Option<(usize, ObsKey<M::Observation>)>,
    /// Action to replay on the parent's states to materialize this node's
    /// states (the lazy-materialization scheme). `None` at the root.
    pending_action: Option<usize>,
    /// N(b): trials that descended from this node.
    visits: AtomicU64,
    /// Workers currently traversing into this node's subtree.
    active_threads: AtomicI64,
    inner: Mutex<NodeInner<M>>,
}

impl<M: DespotModel> Node<M> {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn scenario_ids(&self) -> &Arc<[u32]> {
        &self.scenario_ids
    }

    pub fn scenario_count(&self) -> usize {
        self.scenario_ids.len()
    }

    pub fn terminal_flags(&self) -> &Arc<[bool]> {
        &self.terminal_flags
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn incoming(&self) -> Option<&(usize, ObsKey<M::Observation>)> {
        self.incoming.as_ref()
    }

    pub fn pending_action(&self) -> Option<usize> {
        self.pending_action
    }

    pub fn visits(&self) -> u64 {
        self.visits.load(Ordering::SeqCst)
    }

    pub fn bump_visits(&self) {
        self.visits.fetch_add(1, Ordering::SeqCst);
    }

    pub fn active_threads(&self) -> i64 {
        self.active_threads.load(Ordering::SeqCst)
    }

    pub fn enter(&self) {
        self.active_threads.fetch_add(1, Ordering::SeqCst);
    }

    pub fn leave(&self) {
        let prev = self.active_threads.fetch_sub(1, Ordering::SeqCst);
        debug_assert!(prev > 0, "active_threads underflow");
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, NodeInner<M>> {
        self.inner.lock().expect("node mutex poisoned")
    }

    pub fn bounds(&self) -> Bounds {
        self.lock().bounds
    }

    pub fn init_bounds(&self) -> Bounds {
        self.lock().init_bounds
    }

    pub fn stage(&self) -> Stage {
        self.lock().stage
    }

    pub fn is_expanded(&self) -> bool {
        self.stage() == Stage::Expanded
    }

    pub fn states(&self) -> Option<Arc<Vec<M::State>>> {
        self.lock().states.clone()
    }

    /// Atomically claims the expansion of this leaf.
    pub fn try_claim(&self) -> ClaimOutcome {
        let mut inner = self.lock();
        match inner.stage {
            Stage::Leaf => {
                inner.stage = Stage::Claimed;
                ClaimOutcome::Claimed
            }
            Stage::Claimed => ClaimOutcome::Busy,
            Stage::Expanded => ClaimOutcome::AlreadyExpanded,
        }
    }

    /// Rolls a failed expansion back to an expandable leaf.
    pub fn release_claim(&self) {
        let mut inner = self.lock();
        debug_assert_eq!(inner.stage, Stage::Claimed);
        inner.stage = Stage::Leaf;
    }

    /// Collapses the upper bound onto the lower bound (depth-capped frontier
    /// node). Returns true if the gap actually changed.
    pub fn collapse_gap(&self) -> bool {
        let mut inner = self.lock();
        if inner.bounds.gap() > 0.0 {
            inner.bounds.upper = inner.bounds.lower;
            true
        } else {
            false
        }
    }

    /// Snapshot of the branch table for read-only consumers.
    pub fn branch_views(&self) -> Vec<BranchView<M>> {
        let inner = self.lock();
        inner
            .branches
            .iter()
            .map(|b| BranchView {
                action: b.action,
                mean_step_reward: b.mean_step_reward,
                visits: b.visits.load(Ordering::SeqCst),
                bounds: b.bounds,
                children: b.children.clone(),
            })
            .collect()
    }

    /// Sum of branch visit counters, `sum_a N(b, a)`.
    pub fn branch_visit_total(&self) -> u64 {
        let inner = self.lock();
        inner
            .branches
            .iter()
            .map(|b| b.visits.load(Ordering::SeqCst))
            .sum()
    }
}

/// Read-only branch snapshot.
pub struct BranchView<M: DespotModel> {
    pub action: usize,
    pub mean_step_reward: f64,
    pub visits: u64,
    pub bounds: Bounds,
    pub children: Vec<ChildEdge<M>>,
}

/// The shared search tree.
pub struct Tree<M: DespotModel> {
    root: Arc<Node<M>>,
    scenarios: Arc<Vec<Scenario<M::State>>>,
    next_id: AtomicU64,
    node_count: AtomicUsize,
}

impl<M: DespotModel> Tree<M> {
    /// Builds a tree over the sampled scenarios. Root states are the scenario
    /// start states; root bounds start unset and must be initialized before
    /// searching.
    pub fn new(model: &M, scenarios: Vec<Scenario<M::State>>) -> Self {
        assert!(!scenarios.is_empty(), "tree needs at least one scenario");
        let states: Vec<M::State> = scenarios.iter().map(|s| s.initial_state.clone()).collect();
        let flags: Vec<bool> = states.iter().map(|s| model.is_terminal(s)).collect();
        let terminal = flags.iter().all(|&f| f);
        let ids: Vec<u32> = (0..scenarios.len() as u32).collect();
        let init = if terminal {
            Bounds { upper: 0.0, lower: 0.0 }
        } else {
            Bounds { upper: f64::INFINITY, lower: f64::NEG_INFINITY }
        };
        let root = Arc::new(Node {
            id: 0,
            depth: 0,
            scenario_ids: ids.into(),
            terminal_flags: flags.into(),
            terminal,
            incoming: None,
            pending_action: None,
            visits: AtomicU64::new(0),
            active_threads: AtomicI64::new(0),
            inner: Mutex::new(NodeInner {
                bounds: init,
                init_bounds: init,
                stage: Stage::Leaf,
                states: Some(Arc::new(states)),
                branches: Vec::new(),
            }),
        });
        Tree {
            root,
            scenarios: Arc::new(scenarios),
            next_id: AtomicU64::new(1),
            node_count: AtomicUsize::new(1),
        }
    }

    pub fn root(&self) -> &Arc<Node<M>> {
        &self.root
    }

    pub fn scenarios(&self) -> &Arc<Vec<Scenario<M::State>>> {
        &self.scenarios
    }

    pub fn scenario_total(&self) -> usize {
        self.scenarios.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count.load(Ordering::SeqCst)
    }

    /// Writes the root's initial bounds (leaf initialization of the root).
    pub fn initialize_root(&self, bounds: Bounds) {
        let mut inner = self.root.lock();
        if self.root.terminal {
            return;
        }
        inner.bounds = bounds;
        inner.init_bounds = bounds;
    }

    /// Turns a claimed (or fresh) leaf into an expanded node using the
    /// backend's expansion result: stores the materialized states, creates
    /// one branch per action with its observation-keyed children, and writes
    /// the node's backed-up bounds. Returns the created children.
    ///
    /// Child creation happens here, on the tree side, never in the backend.
    pub fn install_expansion(
        &self,
        node: &Arc<Node<M>>,
        result: ExpansionResult<M>,
        discount: f64,
        clamp_bounds: bool,
    ) -> Vec<Arc<Node<M>>> {
        debug_assert_eq!(result.node_id, node.id());
        let scenario_total = node.scenario_count() as f64;
        let mut created = Vec::new();

        // Children grouped per action, already sorted by (action, key).
        let mut per_action: BTreeMap<usize, Vec<ChildEdge<M>>> = BTreeMap::new();
        for child in result.children {
            let flags: Arc<[bool]> = child.terminal_flags.into();
            let terminal = flags.iter().all(|&f| f);
            let child_bounds = if terminal {
                Bounds { upper: 0.0, lower: 0.0 }
            } else {
                Bounds { upper: child.upper, lower: child.lower }
            };
            let arc = Arc::new(Node {
                id: self.next_id.fetch_add(1, Ordering::SeqCst),
                depth: node.depth() + 1,
                scenario_ids: child.scenario_ids.into(),
                terminal_flags: flags,
                terminal,
                incoming: Some((child.action, child.observation.clone())),
                pending_action: Some(child.action),
                visits: AtomicU64::new(0),
                active_threads: AtomicI64::new(0),
                inner: Mutex::new(NodeInner {
                    bounds: child_bounds,
                    init_bounds: child_bounds,
                    stage: Stage::Leaf,
                    states: None,
                    branches: Vec::new(),
                }),
            });
            created.push(arc.clone());
            per_action
                .entry(child.action)
                .or_default()
                .push((child.observation, arc));
        }
        self.node_count.fetch_add(created.len(), Ordering::SeqCst);

        // Branch bounds from the scenario-weighted Bellman form over the
        // freshly initialized children.
        let mut branches = Vec::with_capacity(result.actions.len());
        for summary in &result.actions {
            let children = per_action.remove(&summary.action).unwrap_or_default();
            let mut upper = summary.mean_step_reward;
            let mut lower = summary.mean_step_reward;
            for (_, child) in &children {
                let w = child.scenario_count() as f64 / scenario_total;
                let b = child.bounds();
                upper += discount * w * b.upper;
                lower += discount * w * b.lower;
            }
            branches.push(Branch {
                action: summary.action,
                mean_step_reward: summary.mean_step_reward,
                visits: AtomicU64::new(0),
                bounds: Bounds { upper, lower },
                children,
            });
        }

        let mut inner = node.lock();
        inner.states = Some(Arc::new(result.updated_states));
        inner.branches = branches;
        inner.stage = Stage::Expanded;
        let mut upper = inner
            .branches
            .iter()
            .map(|b| b.bounds.upper)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut lower = inner
            .branches
            .iter()
            .map(|b| b.bounds.lower)
            .fold(f64::NEG_INFINITY, f64::max);
        if clamp_bounds {
            upper = upper.min(inner.init_bounds.upper);
            lower = lower.max(inner.init_bounds.lower);
        }
        inner.bounds = Bounds { upper, lower };
        debug_assert!(
            inner.bounds.is_ordered(),
            "install_expansion crossed bounds on node {} (depth {}): {:?} with init {:?}, \
             branches {:?}",
            node.id(),
            node.depth(),
            inner.bounds,
            inner.init_bounds,
            inner
                .branches
                .iter()
                .map(|b| (b.action, b.bounds, b.mean_step_reward))
                .collect::<Vec<_>>()
        );
        drop(inner);
        created
    }

    /// Visits every node top-down.
    pub fn for_each_node(&self, mut f: impl FnMut(&Arc<Node<M>>)) {
        let mut queue = vec![self.root.clone()];
        while let Some(node) = queue.pop() {
            f(&node);
            for view in node.branch_views() {
                for (_, child) in view.children {
                    queue.push(child);
                }
            }
        }
    }

    /// All traversal markers must be zero when no trial is in flight.
    pub fn audit_markers_zero(&self) -> Result<(), String> {
        let mut bad = None;
        self.for_each_node(|n| {
            if n.active_threads() != 0 && bad.is_none() {
                bad = Some(format!(
                    "node {} has active_threads = {}",
                    n.id(),
                    n.active_threads()
                ));
            }
        });
        bad.map_or(Ok(()), Err)
    }

    /// At quiescence every node satisfies `sum_a N(b, a) = N(b)`.
    pub fn audit_count_consistency(&self) -> Result<(), String> {
        let mut bad = None;
        self.for_each_node(|n| {
            if bad.is_some() {
                return;
            }
            let total = n.branch_visit_total();
            if total != n.visits() {
                bad = Some(format!(
                    "node {}: sum_a N(b,a) = {} but N(b) = {}",
                    n.id(),
                    total,
                    n.visits()
                ));
            }
        });
        bad.map_or(Ok(()), Err)
    }

    /// Every branch's children must partition the parent's scenario set.
    pub fn audit_partitions(&self) -> Result<(), String> {
        let mut bad = None;
        self.for_each_node(|n| {
            if bad.is_some() || !n.is_expanded() {
                return;
            }
            for view in n.branch_views() {
                let mut seen: Vec<u32> = Vec::new();
                for (_, child) in &view.children {
                    seen.extend_from_slice(child.scenario_ids());
                }
                seen.sort_unstable();
                if seen.as_slice() != &n.scenario_ids()[..] {
                    bad = Some(format!(
                        "node {} action {}: children do not partition the scenario set",
                        n.id(),
                        view.action
                    ));
                    return;
                }
            }
        });
        bad.map_or(Ok(()), Err)
    }

    /// JSON dump of nodes, bounds, counts, and edges.
    pub fn dump_json(&self) -> serde_json::Value {
        let mut nodes = Vec::new();
        self.for_each_node(|n| {
            let b = n.bounds();
            let branches: Vec<_> = n
                .branch_views()
                .into_iter()
                .map(|v| {
                    json!({
                        "action": v.action,
                        "mean_step_reward": v.mean_step_reward,
                        "visits": v.visits,
                        "upper": v.bounds.upper,
                        "lower": v.bounds.lower,
                        "children": v.children.iter().map(|(k, c)| {
                            json!({ "obs": k.label(), "node": c.id() })
                        }).collect::<Vec<_>>(),
                    })
                })
                .collect();
            nodes.push(json!({
                "id": n.id(),
                "depth": n.depth(),
                "scenarios": n.scenario_count(),
                "terminal": n.is_terminal(),
                "upper": b.upper,
                "lower": b.lower,
                "visits": n.visits(),
                "expanded": n.is_expanded(),
                "incoming": n.incoming().map(|(a, k)| json!({ "action": a, "obs": k.label() })),
                "branches": branches,
            }));
        });
        json!({
            "node_count": self.node_count(),
            "scenario_count": self.scenario_total(),
            "nodes": nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ActionSummary, ChildInit, ExpansionResult};
    use crate::testutil::{fake_result, line_tree, FakeChild};

    #[test]
    fn obs_key_orders_terminal_first() {
        assert!(ObsKey::<u8>::Terminal < ObsKey::Obs(0));
        assert!(ObsKey::Obs(1u8) < ObsKey::Obs(2u8));
    }

    #[test]
    fn install_expansion_builds_branches_and_bounds() {
        let (_, tree) = line_tree(4);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[0.5, -0.5],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 4.0, lower: 1.0 },
                FakeChild { action: 0, obs: 1, ids: vec![2, 3], upper: 2.0, lower: 0.0 },
                FakeChild { action: 1, obs: 0, ids: vec![0, 1, 2, 3], upper: 8.0, lower: 2.0 },
            ],
        );
        let created = tree.install_expansion(&root, result, 0.9, true);
        assert_eq!(created.len(), 3);
        assert_eq!(tree.node_count(), 4);
        assert!(root.is_expanded());
        let views = root.branch_views();
        // branch 0: 0.5 + 0.9*(0.5*4 + 0.5*2) = 3.2 upper; 0.5 + 0.9*0.5 = 0.95 lower
        assert!((views[0].bounds.upper - 3.2).abs() < 1e-12);
        assert!((views[0].bounds.lower - 0.95).abs() < 1e-12);
        // branch 1: -0.5 + 0.9*8 = 6.7 upper
        assert!((views[1].bounds.upper - 6.7).abs() < 1e-12);
        let b = root.bounds();
        assert!((b.upper - 6.7).abs() < 1e-12);
        assert!((b.lower - 1.3).abs() < 1e-12); // -0.5 + 0.9*2
        tree.audit_partitions().unwrap();
        tree.audit_markers_zero().unwrap();
        tree.audit_count_consistency().unwrap();
    }

    #[test]
    fn all_terminal_children_are_terminal_nodes() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        let result = ExpansionResult {
            node_id: root.id(),
            updated_states: vec![0, 0],
            steps: Vec::new(),
            actions: vec![ActionSummary { action: 0, mean_step_reward: 0.0 }],
            children: vec![ChildInit {
                action: 0,
                observation: ObsKey::Terminal,
                scenario_ids: vec![0, 1],
                terminal_flags: vec![true, true],
                upper: 5.0,  // ignored: terminal children pin to zero
                lower: 1.0,
            }],
        };
        let created = tree.install_expansion(&root, result, 0.9, true);
        assert!(created[0].is_terminal());
        let b = created[0].bounds();
        assert_eq!(b.upper, 0.0);
        assert_eq!(b.lower, 0.0);
    }

    #[test]
    fn claim_protocol() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        assert_eq!(root.try_claim(), ClaimOutcome::Claimed);
        assert_eq!(root.try_claim(), ClaimOutcome::Busy);
        root.release_claim();
        assert_eq!(root.try_claim(), ClaimOutcome::Claimed);
        let result = fake_result(
            &root,
            &[0.0, 0.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 1.0, lower: 0.0 },
                FakeChild { action: 1, obs: 0, ids: vec![0, 1], upper: 1.0, lower: 0.0 },
            ],
        );
        tree.install_expansion(&root, result, 0.9, true);
        assert_eq!(root.try_claim(), ClaimOutcome::AlreadyExpanded);
    }

    #[test]
    fn collapse_gap_is_idempotent() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        assert!(root.collapse_gap());
        assert_eq!(root.bounds().gap(), 0.0);
        assert!(!root.collapse_gap());
    }

    #[test]
    fn dump_json_contains_every_node() {
        let (_, tree) = line_tree(3);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[0.0],
            vec![FakeChild { action: 0, obs: 0, ids: vec![0, 1, 2], upper: 1.0, lower: 0.0 }],
        );
        tree.install_expansion(&root, result, 0.9, true);
        let dump = tree.dump_json();
        assert_eq!(dump["node_count"], 2);
        assert_eq!(dump["nodes"].as_array().unwrap().len(), 2);
    }
}
