//! Anytime heuristic search over the scenario tree.
//!
//! Serial search follows the classic DESPOT heuristics: descend the
//! max-upper-bound action branch and the max weighted-excess-uncertainty
//! observation branch, expand the first frontier leaf, then back the bounds
//! up to the root. Parallel search runs the same trial loop on several
//! workers over one shared tree, replacing the action rule with a
//! scenario-weighted UCT bound and repelling peers from occupied observation
//! branches with a virtual loss. Mutations happen under per-node locks held
//! only for the write itself, never across a backend call; a leaf expansion
//! is claimed atomically by one worker and peers re-select.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::sync::{Arc, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::backend::{
    initialize_bounds, BackendError, BackendTiming, ExpansionRequest, SimContext,
    SimulationBackend,
};
use crate::belief::Belief;
use crate::model::{DespotModel, ModelSpec};
use crate::scenario::{sample_scenarios, ScenarioError};
use crate::tree::{Bounds, ClaimOutcome, Node, Stage, Tree};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("time budget must be positive")]
    InvalidBudget,
    #[error("node is not expanded")]
    UnexpandedNode,
    #[error("action index {0} has no branch")]
    UnknownBranch(usize),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Search parameters.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SearchConfig {
    /// K: number of sampled scenarios.
    pub scenario_count: usize,
    /// Discount factor used by backups and rollouts.
    pub discount: f64,
    /// Target-uncertainty factor in the excess-uncertainty rule, in (0, 1).
    pub xi: f64,
    /// Exploration scale of the scenario-weighted UCT action rule.
    pub uct_scale: f64,
    /// Virtual-loss scale for occupied observation branches.
    pub virtual_loss_scale: f64,
    /// Depth cap for both trials and rollouts.
    pub max_depth: u32,
    pub time_budget: Duration,
    pub workers: usize,
    pub seed: u64,
    /// Stop once the root gap falls to this value (0 = pure anytime).
    pub epsilon_target: f64,
    /// Optional deterministic trial cap (reproducible searches).
    pub max_trials: Option<u64>,
    /// Clamp node bounds at their initialization values during backup.
    pub clamp_bounds: bool,
    /// Record the root bounds after every trial.
    pub record_root_bounds: bool,
    /// Record one structured trace entry per trial.
    pub trace: bool,
}

impl SearchConfig {
    /// Defaults derived from a model's spec.
    pub fn for_model(spec: &ModelSpec, scenario_count: usize) -> Self {
        SearchConfig {
            scenario_count,
            discount: spec.discount,
            xi: 0.95,
            uct_scale: 0.0,
            virtual_loss_scale: 0.0,
            max_depth: spec.max_rollout_depth,
            time_budget: Duration::from_millis(100),
            workers: 1,
            seed: 0,
            epsilon_target: 0.0,
            max_trials: None,
            clamp_bounds: true,
            record_root_bounds: false,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |msg: &str| Err(SearchError::InvalidConfig(msg.to_owned()));
        if self.scenario_count == 0 {
            return fail("scenario_count must be >= 1");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return fail("discount must lie in (0, 1)");
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return fail("xi must lie in (0, 1)");
        }
        if self.uct_scale < 0.0 || self.virtual_loss_scale < 0.0 {
            return fail("exploration scales must be nonnegative");
        }
        if self.max_depth == 0 {
            return fail("max_depth must be >= 1");
        }
        if self.workers == 0 {
            return fail("workers must be >= 1");
        }
        if self.epsilon_target < 0.0 {
            return fail("epsilon_target must be nonnegative");
        }
        Ok(())
    }
}

/// One structured trace entry per trial.
#[derive(Clone, Debug)]
pub struct TrialTrace {
    pub worker: usize,
    /// (node id, action whose counters were bumped at that node) along the
    /// path. `None` when the trial ended at the node before selecting.
    pub path: Vec<(u64, Option<usize>)>,
    pub expanded: Option<u64>,
    pub nanos: u64,
}

/// Search statistics.
#[derive(Clone, Debug)]
pub struct SearchStats {
    pub node_count: usize,
    pub trial_count: u64,
    pub expansion_count: u64,
    pub max_depth_reached: u32,
    pub wall_time: Duration,
    pub root_bounds: Bounds,
    /// (trial index, root bounds) after each backup when enabled.
    pub root_bound_log: Vec<(u64, Bounds)>,
    pub traces: Vec<TrialTrace>,
    pub backend: BackendTiming,
}

/// A finished search: the tree plus its statistics.
pub struct SearchOutcome<M: DespotModel> {
    pub tree: Tree<M>,
    pub stats: SearchStats,
}

// ---------------------------------------------------------------------------
// Selection rules
// ---------------------------------------------------------------------------

/// Weighted excess uncertainty of a child with the given gap and scenario
/// fraction relative to the root gap.
#[inline]
pub fn weu_value(gap: f64, scenario_fraction: f64, xi: f64, root_gap: f64) -> f64 {
    gap - scenario_fraction * xi * root_gap
}

/// Scenario-weighted UCT bound for an action branch. With `uct_scale == 0`
/// this reduces exactly to the plain upper bound (no untried-branch
/// preference), which is what the serial rule requires.
#[inline]
pub fn augmented_upper_value(
    upper: f64,
    scenario_count: usize,
    node_visits: u64,
    branch_visits: u64,
    uct_scale: f64,
) -> f64 {
    if uct_scale == 0.0 {
        return upper;
    }
    if branch_visits == 0 {
        return f64::INFINITY;
    }
    if node_visits == 0 {
        return upper;
    }
    let k = scenario_count as f64;
    upper + uct_scale * ((k * node_visits as f64).ln() / (k * branch_visits as f64)).sqrt()
}

/// Virtual-loss adjusted excess uncertainty of an observation branch. The
/// loss scales with the number of workers currently inside the branch.
#[inline]
pub fn augmented_weu_value(weu: f64, active_threads: i64, loss_scale: f64, root_gap: f64) -> f64 {
    weu - active_threads as f64 * loss_scale * root_gap
}

/// Max-upper-bound action selection; ties break to the lowest action index.
pub fn select_action_serial<M: DespotModel>(node: &Node<M>) -> Result<usize, SearchError> {
    select_action(node, 0.0)
}

/// Scenario-weighted UCT action selection; ties break to the lowest index.
pub fn select_action_uct<M: DespotModel>(
    node: &Node<M>,
    uct_scale: f64,
) -> Result<usize, SearchError> {
    select_action(node, uct_scale)
}

fn select_action<M: DespotModel>(node: &Node<M>, uct_scale: f64) -> Result<usize, SearchError> {
    let views = node.branch_views();
    if views.is_empty() {
        return Err(SearchError::UnexpandedNode);
    }
    let node_visits = node.visits();
    let scenario_count = node.scenario_count();
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for view in &views {
        let value = augmented_upper_value(
            view.bounds.upper,
            scenario_count,
            node_visits,
            view.visits,
            uct_scale,
        );
        if value > best_value {
            best_value = value;
            best = view.action;
        }
    }
    Ok(best)
}

/// Max-WEU observation selection. Returns `None` when every child's score is
/// nonpositive (the trial terminates); ties break to the smallest key.
pub fn select_obs_serial<M: DespotModel>(
    node: &Node<M>,
    action: usize,
    root_gap: f64,
    xi: f64,
    scenario_total: usize,
) -> Result<Option<Arc<Node<M>>>, SearchError> {
    select_obs(node, action, root_gap, xi, scenario_total, 0.0, &[])
}

/// Virtual-loss observation selection with an exclusion list used by the
/// claim/re-select protocol.
pub fn select_obs_virtual_loss<M: DespotModel>(
    node: &Node<M>,
    action: usize,
    root_gap: f64,
    xi: f64,
    scenario_total: usize,
    loss_scale: f64,
    excluded: &[u64],
) -> Result<Option<Arc<Node<M>>>, SearchError> {
    select_obs(node, action, root_gap, xi, scenario_total, loss_scale, excluded)
}

fn select_obs<M: DespotModel>(
    node: &Node<M>,
    action: usize,
    root_gap: f64,
    xi: f64,
    scenario_total: usize,
    loss_scale: f64,
    excluded: &[u64],
) -> Result<Option<Arc<Node<M>>>, SearchError> {
    let views = node.branch_views();
    if views.is_empty() {
        return Err(SearchError::UnexpandedNode);
    }
    let view = views
        .into_iter()
        .find(|v| v.action == action)
        .ok_or(SearchError::UnknownBranch(action))?;
    let mut best: Option<Arc<Node<M>>> = None;
    let mut best_score = 0.0;
    for (_, child) in &view.children {
        if excluded.contains(&child.id()) {
            continue;
        }
        let fraction = child.scenario_count() as f64 / scenario_total as f64;
        let weu = weu_value(child.bounds().gap(), fraction, xi, root_gap);
        let score = if loss_scale == 0.0 {
            weu
        } else {
            augmented_weu_value(weu, child.active_threads(), loss_scale, root_gap)
        };
        // Strictly-greater keeps the smallest key on ties; children iterate
        // in ascending key order.
        if score > 0.0 && (best.is_none() || score > best_score) {
            best_score = score;
            best = Some(child.clone());
        }
    }
    Ok(best)
}

/// Final action choice at the root: max lower bound, ties to lowest index.
pub fn root_action<M: DespotModel>(tree: &Tree<M>) -> Result<usize, SearchError> {
    let views = tree.root().branch_views();
    if views.is_empty() {
        return Err(SearchError::UnexpandedNode);
    }
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for view in &views {
        if view.bounds.lower > best_value {
            best_value = view.bounds.lower;
            best = view.action;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Backup
// ---------------------------------------------------------------------------

/// One step of a trial path: the node and the action selected at it, if any.
pub struct PathStep<M: DespotModel> {
    pub node: Arc<Node<M>>,
    pub action: Option<usize>,
}

impl<M: DespotModel> Clone for PathStep<M> {
    fn clone(&self) -> Self {
        PathStep { node: self.node.clone(), action: self.action }
    }
}

/// Scenario-weighted Bellman backup along a path, deepest node first.
///
/// For the traversed branch: `V(b,a) = meanR(b,a) + gamma * sum_z w_z V(b_z)`
/// for both bound kinds; the node then takes the max over its branches,
/// optionally clamped at its initialization values (upper capped at the
/// heuristic mean, lower floored at the rollout mean). Writes are monotone
/// (upper never increases, lower never decreases), which is a no-op in
/// serial execution and keeps concurrent backups from transiently loosening
/// bounds.
pub fn backup<M: DespotModel>(path: &[PathStep<M>], discount: f64, clamp_bounds: bool) {
    for step in path.iter().rev() {
        backup_node(&step.node, step.action, discount, clamp_bounds);
    }
}

fn backup_node<M: DespotModel>(
    node: &Arc<Node<M>>,
    action: Option<usize>,
    discount: f64,
    clamp_bounds: bool,
) {
    if !node.is_expanded() {
        return;
    }
    if let Some(action) = action {
        // Read the children's current bounds without holding this node's lock.
        let (children, mean_reward) = {
            let inner = node.lock();
            let branch = &inner.branches[action];
            (
                branch
                    .children
                    .iter()
                    .map(|(_, c)| c.clone())
                    .collect::<Vec<_>>(),
                branch.mean_step_reward,
            )
        };
        let total = node.scenario_count() as f64;
        let mut upper = mean_reward;
        let mut lower = mean_reward;
        for child in &children {
            let w = child.scenario_count() as f64 / total;
            let b = child.bounds();
            upper += discount * w * b.upper;
            lower += discount * w * b.lower;
        }
        let mut inner = node.lock();
        let branch = &mut inner.branches[action];
        branch.bounds.upper = branch.bounds.upper.min(upper);
        branch.bounds.lower = branch.bounds.lower.max(lower);
        write_node_bounds(&mut inner, clamp_bounds);
    } else {
        let mut inner = node.lock();
        write_node_bounds(&mut inner, clamp_bounds);
    }
}

fn write_node_bounds<M: DespotModel>(
    inner: &mut MutexGuard<'_, crate::tree::NodeInner<M>>,
    clamp_bounds: bool,
) {
    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for branch in inner.branches.iter() {
        upper = upper.max(branch.bounds.upper);
        lower = lower.max(branch.bounds.lower);
    }
    if clamp_bounds {
        upper = upper.min(inner.init_bounds.upper);
        lower = lower.max(inner.init_bounds.lower);
    }
    inner.bounds.upper = inner.bounds.upper.min(upper);
    inner.bounds.lower = inner.bounds.lower.max(lower);
    debug_assert!(inner.bounds.is_ordered(), "bounds crossed: {:?}", inner.bounds);
}

// ---------------------------------------------------------------------------
// The trial driver
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Serial,
    VirtualLoss,
}

enum TrialOutcome {
    Progress,
    NoChange,
    Contended,
}

struct Driver<'a, M: DespotModel> {
    tree: Tree<M>,
    model: &'a M,
    backend: &'a dyn SimulationBackend<M>,
    config: &'a SearchConfig,
    mode: Mode,
    deadline: Instant,
    stop: AtomicBool,
    error: Mutex<Option<SearchError>>,
    trials_started: AtomicU64,
    trials_done: AtomicU64,
    expansions: AtomicU64,
    progress_epoch: AtomicU64,
    max_depth_seen: AtomicU32,
    workers_active: AtomicUsize,
    root_bound_log: Mutex<Vec<(u64, Bounds)>>,
    traces: Mutex<Vec<TrialTrace>>,
}

impl<'a, M: DespotModel> Driver<'a, M> {
    fn new(
        model: &'a M,
        backend: &'a dyn SimulationBackend<M>,
        belief: &Belief<M::State>,
        config: &'a SearchConfig,
        mode: Mode,
    ) -> Result<Self, SearchError> {
        config.validate()?;
        let scenarios = sample_scenarios(belief, config.scenario_count, config.seed)?;
        let tree = Tree::new(model, scenarios);
        Ok(Driver {
            tree,
            model,
            backend,
            config,
            mode,
            deadline: Instant::now() + config.time_budget,
            stop: AtomicBool::new(false),
            error: Mutex::new(None),
            trials_started: AtomicU64::new(0),
            trials_done: AtomicU64::new(0),
            expansions: AtomicU64::new(0),
            progress_epoch: AtomicU64::new(0),
            max_depth_seen: AtomicU32::new(0),
            workers_active: AtomicUsize::new(0),
            root_bound_log: Mutex::new(Vec::new()),
            traces: Mutex::new(Vec::new()),
        })
    }

    fn ctx(&self) -> SimContext<'_, M> {
        SimContext {
            model: self.model,
            scenarios: self.tree.scenarios(),
            discount: self.config.discount,
            max_depth: self.config.max_depth,
        }
    }

    /// Leaf initialization of the root (heuristic mean / rollout mean).
    fn init_root(&self) {
        let root = self.tree.root();
        if root.is_terminal() {
            return;
        }
        let states = root.states().expect("root states are materialized");
        let (upper, lower) = initialize_bounds(
            &self.ctx(),
            &states,
            root.terminal_flags(),
            root.scenario_ids(),
            0,
        );
        self.tree.initialize_root(Bounds { upper, lower });
    }

    fn expand(
        &self,
        node: &Arc<Node<M>>,
        parent: Option<&Arc<Node<M>>>,
    ) -> Result<(), SearchError> {
        let (parent_states, last_action) = match parent {
            None => {
                let states = node.states().expect("root states are materialized");
                (states.as_ref().clone(), None)
            }
            Some(parent) => {
                let states = parent.states().expect("parent states are materialized");
                let gathered = gather_states(
                    parent.scenario_ids(),
                    node.scenario_ids(),
                    states.as_ref(),
                );
                (gathered, node.pending_action())
            }
        };
        let request = ExpansionRequest {
            node_id: node.id(),
            depth: node.depth(),
            scenario_ids: node.scenario_ids().clone(),
            parent_states,
            terminal_flags: node.terminal_flags().clone(),
            last_action,
        };
        let result = self.backend.submit(&request, &self.ctx())?;
        self.tree.install_expansion(
            node,
            result,
            self.config.discount,
            self.config.clamp_bounds,
        );
        self.expansions.fetch_add(1, Ordering::SeqCst);
        self.progress_epoch.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn trial(&self, worker: usize) -> Result<TrialOutcome, SearchError> {
        let start = Instant::now();
        let root = self.tree.root().clone();
        let root_gap = root.bounds().gap();
        let mut path: Vec<PathStep<M>> = vec![PathStep { node: root, action: None }];
        let mut entered: Vec<Arc<Node<M>>> = Vec::new();
        let mut expanded_id = None;
        let mut outcome = TrialOutcome::NoChange;

        let descent: Result<(), SearchError> = 'descend: loop {
            let current = path.last().expect("path nonempty").node.clone();
            if current.is_terminal() {
                break Ok(());
            }
            match current.stage() {
                Stage::Leaf | Stage::Claimed => {
                    // Only the root can be met unexpanded outside the
                    // selection protocol below.
                    if current.depth() >= self.config.max_depth {
                        if current.collapse_gap() {
                            self.progress_epoch.fetch_add(1, Ordering::SeqCst);
                            outcome = TrialOutcome::Progress;
                        }
                        break Ok(());
                    }
                    match current.try_claim() {
                        ClaimOutcome::Claimed => {
                            let parent = if path.len() >= 2 {
                                Some(path[path.len() - 2].node.clone())
                            } else {
                                None
                            };
                            match self.expand(&current, parent.as_ref()) {
                                Ok(()) => {
                                    expanded_id = Some(current.id());
                                    outcome = TrialOutcome::Progress;
                                    break Ok(());
                                }
                                Err(e) => {
                                    current.release_claim();
                                    break 'descend Err(e);
                                }
                            }
                        }
                        ClaimOutcome::Busy => {
                            outcome = TrialOutcome::Contended;
                            break Ok(());
                        }
                        ClaimOutcome::AlreadyExpanded => continue,
                    }
                }
                Stage::Expanded => {
                    let action = match self.mode {
                        Mode::Serial => select_action_serial(&current)?,
                        Mode::VirtualLoss => {
                            select_action_uct(&current, self.config.uct_scale)?
                        }
                    };
                    // Counters update immediately at selection time so peer
                    // workers see them before this trial's expansion lands.
                    current.bump_visits();
                    bump_branch_visits(&current, action);
                    path.last_mut().expect("path nonempty").action = Some(action);
                    let mut excluded: Vec<u64> = Vec::new();
                    let chosen = loop {
                        let child = match self.mode {
                            Mode::Serial => select_obs_serial(
                                &current,
                                action,
                                root_gap,
                                self.config.xi,
                                self.tree.scenario_total(),
                            )?,
                            Mode::VirtualLoss => select_obs_virtual_loss(
                                &current,
                                action,
                                root_gap,
                                self.config.xi,
                                self.tree.scenario_total(),
                                self.config.virtual_loss_scale,
                                &excluded,
                            )?,
                        };
                        let Some(child) = child else { break None };
                        if child.is_terminal() || child.depth() >= self.config.max_depth {
                            break Some((child, false));
                        }
                        match child.try_claim() {
                            ClaimOutcome::Claimed => break Some((child, true)),
                            ClaimOutcome::AlreadyExpanded => break Some((child, false)),
                            ClaimOutcome::Busy => {
                                // Another worker owns this expansion: re-select.
                                excluded.push(child.id());
                            }
                        }
                    };
                    match chosen {
                        None => break Ok(()),
                        Some((child, claimed)) => {
                            if self.mode == Mode::VirtualLoss {
                                child.enter();
                                entered.push(child.clone());
                            }
                            path.push(PathStep { node: child.clone(), action: None });
                            if claimed {
                                let parent = path[path.len() - 2].node.clone();
                                match self.expand(&child, Some(&parent)) {
                                    Ok(()) => {
                                        expanded_id = Some(child.id());
                                        outcome = TrialOutcome::Progress;
                                        break Ok(());
                                    }
                                    Err(e) => {
                                        child.release_claim();
                                        break 'descend Err(e);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        };

        if descent.is_ok() {
            backup(&path, self.config.discount, self.config.clamp_bounds);
        }
        for node in entered.drain(..) {
            node.leave();
        }
        let deepest = path.last().expect("path nonempty").node.depth();
        self.max_depth_seen.fetch_max(deepest, Ordering::SeqCst);
        if self.config.record_root_bounds && descent.is_ok() {
            let trial_idx = self.trials_done.load(Ordering::SeqCst);
            self.root_bound_log
                .lock()
                .expect("log mutex")
                .push((trial_idx, self.tree.root().bounds()));
        }
        if self.config.trace {
            self.traces.lock().expect("trace mutex").push(TrialTrace {
                worker,
                path: path.iter().map(|s| (s.node.id(), s.action)).collect(),
                expanded: expanded_id,
                nanos: start.elapsed().as_nanos() as u64,
            });
        }
        descent.map(|()| outcome)
    }

    fn should_stop(&self) -> bool {
        if self.stop.load(Ordering::SeqCst) {
            return true;
        }
        if Instant::now() >= self.deadline {
            return true;
        }
        let root = self.tree.root();
        if root.is_terminal() {
            return true;
        }
        // The gap target only applies once the root is expanded: even a
        // converged belief needs one expansion so a root action exists.
        if root.is_expanded() && root.bounds().gap() <= self.config.epsilon_target {
            return true;
        }
        false
    }

    fn run_worker(&self, worker: usize) {
        self.workers_active.fetch_add(1, Ordering::SeqCst);
        loop {
            if self.should_stop() {
                break;
            }
            if let Some(max) = self.config.max_trials {
                if self.trials_started.fetch_add(1, Ordering::SeqCst) >= max {
                    break;
                }
            } else {
                self.trials_started.fetch_add(1, Ordering::SeqCst);
            }
            let epoch_before = self.progress_epoch.load(Ordering::SeqCst);
            match self.trial(worker) {
                Ok(outcome) => {
                    self.trials_done.fetch_add(1, Ordering::SeqCst);
                    match outcome {
                        TrialOutcome::Progress => {}
                        TrialOutcome::Contended => std::thread::yield_now(),
                        TrialOutcome::NoChange => {
                            let quiet =
                                self.progress_epoch.load(Ordering::SeqCst) == epoch_before;
                            if quiet && self.workers_active.load(Ordering::SeqCst) == 1 {
                                // Saturated and alone: no trial can make progress.
                                break;
                            }
                            std::thread::yield_now();
                        }
                    }
                }
                Err(e) => {
                    let mut slot = self.error.lock().expect("error mutex");
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    self.stop.store(true, Ordering::SeqCst);
                    break;
                }
            }
        }
        self.workers_active.fetch_sub(1, Ordering::SeqCst);
    }

    fn finish(self, started: Instant) -> Result<SearchOutcome<M>, SearchError> {
        if let Some(err) = self.error.lock().expect("error mutex").take() {
            return Err(err);
        }
        let stats = SearchStats {
            node_count: self.tree.node_count(),
            trial_count: self.trials_done.load(Ordering::SeqCst),
            expansion_count: self.expansions.load(Ordering::SeqCst),
            max_depth_reached: self.max_depth_seen.load(Ordering::SeqCst),
            wall_time: started.elapsed(),
            root_bounds: self.tree.root().bounds(),
            root_bound_log: std::mem::take(
                &mut *self.root_bound_log.lock().expect("log mutex"),
            ),
            traces: std::mem::take(&mut *self.traces.lock().expect("trace mutex")),
            backend: self.backend.timing(),
        };
        Ok(SearchOutcome { tree: self.tree, stats })
    }
}

fn bump_branch_visits<M: DespotModel>(node: &Node<M>, action: usize) {
    let inner = node.lock();
    inner.branches[action].visits.fetch_add(1, Ordering::SeqCst);
}

fn gather_states<S: Clone>(parent_ids: &[u32], child_ids: &[u32], states: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(child_ids.len());
    let mut pi = 0;
    for &cid in child_ids {
        while parent_ids[pi] != cid {
            pi += 1;
        }
        out.push(states[pi].clone());
    }
    out
}

/// Single-path anytime search (the classic serial loop).
pub fn serial_search<M: DespotModel>(
    model: &M,
    backend: &dyn SimulationBackend<M>,
    belief: &Belief<M::State>,
    config: &SearchConfig,
) -> Result<SearchOutcome<M>, SearchError> {
    if config.time_budget.is_zero() {
        return Err(SearchError::InvalidBudget);
    }
    let started = Instant::now();
    let driver = Driver::new(model, backend, belief, config, Mode::Serial)?;
    driver.init_root();
    driver.run_worker(0);
    driver.finish(started)
}

/// Multi-worker shared-tree search. With `workers == 1`, `uct_scale == 0`, and
/// `virtual_loss_scale == 0` this produces a tree isomorphic to
/// [`serial_search`] under the same config and seed.
pub fn parallel_search<M: DespotModel>(
    model: &M,
    backend: &dyn SimulationBackend<M>,
    belief: &Belief<M::State>,
    config: &SearchConfig,
) -> Result<SearchOutcome<M>, SearchError> {
    let started = Instant::now();
    let driver = Driver::new(model, backend, belief, config, Mode::VirtualLoss)?;
    driver.init_root();
    std::thread::scope(|scope| {
        for worker in 0..config.workers {
            let driver = &driver;
            scope.spawn(move || driver.run_worker(worker));
        }
    });
    driver.finish(started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SerialBackend;
    use crate::rng::RandomStream;
    use crate::testutil::{fake_result, line_tree, FakeChild, LineModel};

    #[test]
    fn weu_hand_values() {
        // xi=0.95, K=100, |phi|=20, gap=1.2, root gap 4.0
        let got = weu_value(1.2, 20.0 / 100.0, 0.95, 4.0);
        let independent = 1.2 - (20.0 * 0.95 * 4.0) / 100.0;
        assert!((got - independent).abs() < 1e-12);
        assert!((got - 0.44).abs() < 1e-12);
        // at the root the fraction is one: (1 - xi) * gap
        let g = 2.5;
        assert!((weu_value(g, 1.0, 0.95, g) - (1.0 - 0.95) * g).abs() < 1e-12);
        // zero gap terminates the path
        assert!(weu_value(0.0, 0.3, 0.95, 4.0) < 0.0);
    }

    #[test]
    fn augmented_upper_hand_values() {
        // |phi|=100, N(b)=10, N(b,a)=2, c_a=1, u=5
        let got = augmented_upper_value(5.0, 100, 10, 2, 1.0);
        let independent = 5.0 + ((100.0f64 * 10.0).ln() / (100.0 * 2.0)).sqrt();
        assert!((got - independent).abs() < 1e-12);
        assert!((got - 5.185846).abs() < 1e-5);
        // c_a = 0 reduces to the plain upper bound even when untried
        assert_eq!(augmented_upper_value(5.0, 100, 10, 0, 0.0), 5.0);
        // untried branches are preferred when exploring
        assert_eq!(augmented_upper_value(5.0, 100, 10, 0, 1.0), f64::INFINITY);
        // unvisited node: bonus vanishes
        assert_eq!(augmented_upper_value(5.0, 100, 0, 1, 1.0), 5.0);
        // single scenario: standard PO-UCT form
        let got = augmented_upper_value(1.0, 1, 9, 3, 0.5);
        let standard = 1.0 + 0.5 * ((9.0f64).ln() / 3.0).sqrt();
        assert!((got - standard).abs() < 1e-12);
    }

    #[test]
    fn augmented_weu_hand_values() {
        assert!((augmented_weu_value(0.44, 1, 0.01, 4.0) - 0.40).abs() < 1e-12);
        assert_eq!(augmented_weu_value(0.44, 0, 0.01, 4.0), 0.44);
    }

    #[test]
    fn select_action_breaks_ties_low() {
        let (_, tree) = line_tree(4);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[0.0, 0.0, 0.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1, 2, 3], upper: 3.0, lower: 0.0 },
                FakeChild { action: 1, obs: 0, ids: vec![0, 1, 2, 3], upper: 5.0, lower: 0.0 },
                FakeChild { action: 2, obs: 0, ids: vec![0, 1, 2, 3], upper: 5.0, lower: 0.0 },
            ],
        );
        tree.install_expansion(&root, result, 1e-9, true);
        // branch uppers are ~ [3e-9*.., ..] scaled: with tiny discount the
        // child uppers barely matter; fabricate directly instead via bounds.
        // Instead check through the views the tie-break on equal uppers.
        let a = select_action_serial(root.as_ref()).unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn select_action_single_action() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[0.0],
            vec![FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 1.0, lower: 0.0 }],
        );
        tree.install_expansion(&root, result, 0.9, true);
        assert_eq!(select_action_serial(root.as_ref()).unwrap(), 0);
    }

    #[test]
    fn select_action_matches_scan_oracle() {
        let stream = RandomStream::new(2024);
        for case in 0..1000u32 {
            let n_actions = 1 + stream.index(case, 0, 5);
            let (_, tree) = line_tree(1);
            let root = tree.root().clone();
            let uppers: Vec<f64> = (0..n_actions)
                .map(|a| (stream.uniform(case, 10 + a as u32) * 10.0).round() / 2.0)
                .collect();
            let children: Vec<FakeChild> = uppers
                .iter()
                .enumerate()
                .map(|(a, &u)| FakeChild { action: a, obs: 0, ids: vec![0], upper: u, lower: u - 1.0 })
                .collect();
            let means = vec![0.0; n_actions];
            tree.install_expansion(&root, fake_result(&root, &means, children), 1.0 - 1e-12, true);
            // brute-force scan oracle
            let mut best = 0;
            for (a, &u) in uppers.iter().enumerate() {
                if u > uppers[best] {
                    best = a;
                }
            }
            assert_eq!(select_action_serial(root.as_ref()).unwrap(), best, "case {case}");
        }
    }

    #[test]
    fn select_action_unexpanded_errors() {
        let (_, tree) = line_tree(1);
        assert!(matches!(
            select_action_serial(tree.root().as_ref()),
            Err(SearchError::UnexpandedNode)
        ));
        assert!(matches!(root_action(&tree), Err(SearchError::UnexpandedNode)));
    }

    #[test]
    fn select_obs_none_when_all_nonpositive() {
        let (_, tree) = line_tree(4);
        let root = tree.root().clone();
        // children with zero gap: weu strictly negative
        let result = fake_result(
            &root,
            &[0.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 1.0, lower: 1.0 },
                FakeChild { action: 0, obs: 1, ids: vec![2, 3], upper: 2.0, lower: 2.0 },
            ],
        );
        tree.install_expansion(&root, result, 0.9, true);
        let got = select_obs_serial(root.as_ref(), 0, 4.0, 0.95, 4).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn select_obs_matches_scan_oracle() {
        let stream = RandomStream::new(55);
        for case in 0..500u32 {
            let n_children = 1 + stream.index(case, 0, 5);
            let (_, tree) = line_tree(n_children);
            let root = tree.root().clone();
            let mut gaps = Vec::new();
            let children: Vec<FakeChild> = (0..n_children)
                .map(|i| {
                    let gap = (stream.uniform(case, 20 + i as u32) * 3.0).round() / 4.0;
                    gaps.push(gap);
                    FakeChild {
                        action: 0,
                        obs: i as u8,
                        ids: vec![i as u32],
                        upper: gap,
                        lower: 0.0,
                    }
                })
                .collect();
            tree.install_expansion(&root, fake_result(&root, &[0.0], children), 0.9, true);
            let root_gap = 1.0;
            let xi = 0.95;
            let k = n_children;
            // scan oracle over raw formula
            let mut best: Option<(usize, f64)> = None;
            for (i, &gap) in gaps.iter().enumerate() {
                let w = gap - (1.0 / k as f64) * xi * root_gap;
                if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((i, w));
                }
            }
            let got = select_obs_serial(root.as_ref(), 0, root_gap, xi, k).unwrap();
            match (got, best) {
                (None, None) => {}
                (Some(child), Some((obs, _))) => {
                    let (key, _) = &root.branch_views()[0].children[obs];
                    let incoming = child.incoming().map(|(_, k)| k.clone());
                    assert_eq!(Some(key.clone()), incoming, "case {case}");
                }
                (got, want) => panic!(
                    "case {case}: selection {:?} vs oracle {:?}",
                    got.map(|c| c.id()),
                    want
                ),
            }
        }
    }

    #[test]
    fn backup_singleton_chain() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[0.0],
            vec![FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 7.0, lower: 3.0 }],
        );
        let children = tree.install_expansion(&root, result, 0.9, true);
        let path = vec![
            PathStep { node: root.clone(), action: Some(0) },
            PathStep { node: children[0].clone(), action: None },
        ];
        backup(&path, 0.9, true);
        let b = root.bounds();
        assert!((b.upper - 0.9 * 7.0).abs() < 1e-12);
        assert!((b.lower - 0.9 * 3.0).abs() < 1e-12);
        // idempotent without new leaves
        backup(&path, 0.9, true);
        let again = root.bounds();
        assert_eq!(b, again);
    }

    #[test]
    fn virtual_loss_repels_peers_from_occupied_branches() {
        let (_, tree) = line_tree(4);
        let root = tree.root().clone();
        // two children with identical gaps
        let result = fake_result(
            &root,
            &[0.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 2.0, lower: 0.0 },
                FakeChild { action: 0, obs: 1, ids: vec![2, 3], upper: 2.0, lower: 0.0 },
            ],
        );
        tree.install_expansion(&root, result, 0.9, true);
        let views = root.branch_views();
        let (_, first) = &views[0].children[0];
        let (_, second) = &views[0].children[1];
        // untouched: ties break to the smallest key
        let chosen = select_obs_virtual_loss(root.as_ref(), 0, 4.0, 0.95, 4, 0.05, &[])
            .unwrap()
            .unwrap();
        assert_eq!(chosen.id(), first.id());
        // a worker inside the first branch repels the next selection
        first.enter();
        let chosen = select_obs_virtual_loss(root.as_ref(), 0, 4.0, 0.95, 4, 0.05, &[])
            .unwrap()
            .unwrap();
        assert_eq!(chosen.id(), second.id());
        first.leave();
        // with zero loss scale occupancy is ignored
        first.enter();
        let chosen = select_obs_virtual_loss(root.as_ref(), 0, 4.0, 0.95, 4, 0.0, &[])
            .unwrap()
            .unwrap();
        assert_eq!(chosen.id(), first.id());
        first.leave();
    }

    #[test]
    fn node_count_matches_tree_walk() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(8);
        cfg.max_trials = Some(40);
        let out = serial_search(&model, &backend, &belief, &cfg).unwrap();
        let mut walked = 0;
        out.tree.for_each_node(|_| walked += 1);
        assert_eq!(walked, out.stats.node_count);
        assert_eq!(walked, out.tree.node_count());
    }

    #[test]
    fn backup_clamps_at_initialization_values() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        tree.initialize_root(Bounds { upper: 10.0, lower: 0.0 });
        let result = fake_result(
            &root,
            &[0.0],
            vec![FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 20.0, lower: -5.0 }],
        );
        let children = tree.install_expansion(&root, result, 0.9, true);
        let path = vec![
            PathStep { node: root.clone(), action: Some(0) },
            PathStep { node: children[0].clone(), action: None },
        ];
        backup(&path, 0.9, true);
        let b = root.bounds();
        // recursion gives (18, -4.5); cap at init upper 10, floor at init lower 0
        assert_eq!(b.upper, 10.0);
        assert_eq!(b.lower, 0.0);
    }

    #[test]
    fn root_action_rules() {
        let (_, tree) = line_tree(2);
        let root = tree.root().clone();
        let result = fake_result(
            &root,
            &[1.0, 2.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 0.0, lower: 0.0 },
                FakeChild { action: 1, obs: 0, ids: vec![0, 1], upper: 0.0, lower: 0.0 },
            ],
        );
        tree.install_expansion(&root, result, 0.9, true);
        // branch lowers are [1.0, 2.0]
        assert_eq!(root_action(&tree).unwrap(), 1);

        let (_, tree2) = line_tree(2);
        let root2 = tree2.root().clone();
        let result2 = fake_result(
            &root2,
            &[2.0, 2.0],
            vec![
                FakeChild { action: 0, obs: 0, ids: vec![0, 1], upper: 0.0, lower: 0.0 },
                FakeChild { action: 1, obs: 0, ids: vec![0, 1], upper: 0.0, lower: 0.0 },
            ],
        );
        tree2.install_expansion(&root2, result2, 0.9, true);
        assert_eq!(root_action(&tree2).unwrap(), 0);
    }

    fn serial_config(k: usize) -> SearchConfig {
        let model = LineModel::new();
        let mut cfg = SearchConfig::for_model(model.spec(), k);
        cfg.time_budget = Duration::from_secs(5);
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn single_trial_builds_one_level() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(8);
        cfg.max_trials = Some(1);
        let out = serial_search(&model, &backend, &belief, &cfg).unwrap();
        assert_eq!(out.stats.trial_count, 1);
        assert!(out.tree.root().is_expanded());
        let mut all_leaf_children = true;
        for view in out.tree.root().branch_views() {
            for (_, child) in view.children {
                if child.is_expanded() {
                    all_leaf_children = false;
                }
            }
        }
        assert!(all_leaf_children);
        assert_eq!(out.stats.expansion_count, 1);
    }

    #[test]
    fn zero_budget_serial_is_error() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(4);
        cfg.time_budget = Duration::ZERO;
        assert!(matches!(
            serial_search(&model, &backend, &belief, &cfg),
            Err(SearchError::InvalidBudget)
        ));
    }

    #[test]
    fn zero_budget_parallel_returns_root_only() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(4);
        cfg.time_budget = Duration::ZERO;
        cfg.workers = 4;
        let out = parallel_search(&model, &backend, &belief, &cfg).unwrap();
        assert_eq!(out.stats.node_count, 1);
        assert_eq!(out.stats.trial_count, 0);
    }

    #[test]
    fn terminal_root_searches_nothing() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![crate::testutil::LINE_GOAL]).unwrap();
        let cfg = serial_config(4);
        let out = serial_search(&model, &backend, &belief, &cfg).unwrap();
        assert_eq!(out.stats.expansion_count, 0);
        assert_eq!(out.stats.node_count, 1);
    }

    #[test]
    fn degenerate_parallel_matches_serial() {
        let model = LineModel::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(16);
        cfg.max_trials = Some(60);
        let serial = serial_search(&model, &SerialBackend::new(), &belief, &cfg).unwrap();
        let parallel = parallel_search(&model, &SerialBackend::new(), &belief, &cfg).unwrap();
        assert_eq!(serial.stats.node_count, parallel.stats.node_count);
        assert_eq!(serial.stats.root_bounds, parallel.stats.root_bounds);
        assert_eq!(root_action(&serial.tree).unwrap(), root_action(&parallel.tree).unwrap());
        parallel.tree.audit_markers_zero().unwrap();
        parallel.tree.audit_count_consistency().unwrap();
        parallel.tree.audit_partitions().unwrap();
    }

    #[test]
    fn parallel_workers_leave_clean_markers() {
        let model = LineModel::new();
        let backend = SerialBackend::new();
        let belief = Belief::uniform(vec![0i32]).unwrap();
        let mut cfg = serial_config(16);
        cfg.workers = 4;
        cfg.uct_scale = 0.5;
        cfg.virtual_loss_scale = 0.05;
        cfg.time_budget = Duration::from_millis(150);
        cfg.trace = true;
        let out = parallel_search(&model, &backend, &belief, &cfg).unwrap();
        out.tree.audit_markers_zero().unwrap();
        out.tree.audit_count_consistency().unwrap();
        out.tree.audit_partitions().unwrap();
        assert!(!out.stats.traces.is_empty());
        // trace-based count audit: descents recorded per (node, action)
        let mut expected: std::collections::HashMap<(u64, usize), u64> =
            std::collections::HashMap::new();
        for trace in &out.stats.traces {
            for (node, action) in &trace.path {
                if let Some(a) = action {
                    *expected.entry((*node, *a)).or_default() += 1;
                }
            }
        }
        out.tree.for_each_node(|n| {
            for view in n.branch_views() {
                let want = expected.get(&(n.id(), view.action)).copied().unwrap_or(0);
                assert_eq!(view.visits, want, "node {} action {}", n.id(), view.action);
            }
        });
    }

    // ----- randomized synthetic trees vs a whole-tree recursion oracle -----
    //
    // Fabricated bounds must bracket a consistent value system the way real
    // heuristics do, so the generator plans the whole tree bottom-up first:
    // each expandable child's init interval is sampled to overlap its
    // subtree's recursion interval.

    pub(crate) struct PlanChild {
        obs: u8,
        ids: Vec<u32>,
        init: Bounds,
        expand: Option<PlanNode>,
    }

    pub(crate) struct PlanNode {
        means: Vec<f64>,
        children: Vec<Vec<PlanChild>>,
    }

    pub(crate) fn gen_plan(
        ids: &[u32],
        depth: u32,
        stream: &RandomStream,
        case: u32,
        salt: &mut u32,
    ) -> (PlanNode, Bounds) {
        fn draw(stream: &RandomStream, case: u32, salt: &mut u32, scale: f64, shift: f64) -> f64 {
            *salt += 1;
            stream.uniform(case, *salt) * scale + shift
        }
        let n_actions = 1 + (draw(stream, case, salt, 3.0, 0.0) as usize).min(2);
        let mut means = Vec::new();
        let mut children: Vec<Vec<PlanChild>> = Vec::new();
        let mut rec_upper = f64::NEG_INFINITY;
        let mut rec_lower = f64::NEG_INFINITY;
        for _ in 0..n_actions {
            let mean = draw(stream, case, salt, 1.0, -0.5);
            means.push(mean);
            let groups = 1 + (draw(stream, case, salt, 3.0, 0.0) as usize).min(2).min(ids.len() - 1);
            let per = ids.len().div_ceil(groups);
            let mut row = Vec::new();
            let mut branch_u = mean;
            let mut branch_l = mean;
            for (g, chunk) in ids.chunks(per).enumerate() {
                let w = chunk.len() as f64 / ids.len() as f64;
                let (init, finals, expand) = if depth < 3 && draw(stream, case, salt, 1.0, 0.0) < 0.5 {
                    let (sub, rec) = gen_plan(chunk, depth + 1, stream, case, salt);
                    // init interval overlapping the recursion interval
                    let init_u = rec.lower + draw(stream, case, salt, 1.0, 0.0) * (rec.gap() + 1.0);
                    let init_l = (rec.lower - draw(stream, case, salt, 1.0, 0.0)).min(init_u);
                    let init = Bounds { upper: init_u, lower: init_l };
                    let finals = Bounds {
                        upper: rec.upper.min(init.upper),
                        lower: rec.lower.max(init.lower),
                    };
                    (init, finals, Some(sub))
                } else {
                    let l = draw(stream, case, salt, 4.0, -2.0);
                    let b = Bounds { upper: l + draw(stream, case, salt, 3.0, 0.0), lower: l };
                    (b, b, None)
                };
                branch_u += 0.9 * w * finals.upper;
                branch_l += 0.9 * w * finals.lower;
                row.push(PlanChild { obs: g as u8, ids: chunk.to_vec(), init, expand });
            }
            rec_upper = rec_upper.max(branch_u);
            rec_lower = rec_lower.max(branch_l);
            children.push(row);
        }
        (
            PlanNode { means, children },
            Bounds { upper: rec_upper, lower: rec_lower },
        )
    }

    pub(crate) fn install_plan(
        tree: &Tree<LineModel>,
        node: &std::sync::Arc<Node<LineModel>>,
        plan: &PlanNode,
        path: &[PathStep<LineModel>],
    ) {
        let mut fakes = Vec::new();
        for (action, row) in plan.children.iter().enumerate() {
            for child in row {
                fakes.push(FakeChild {
                    action,
                    obs: child.obs,
                    ids: child.ids.clone(),
                    upper: child.init.upper,
                    lower: child.init.lower,
                });
            }
        }
        let created = tree.install_expansion(node, fake_result(node, &plan.means, fakes), 0.9, true);
        let mut full: Vec<PathStep<LineModel>> = path.to_vec();
        full.push(PathStep { node: node.clone(), action: None });
        backup(&full, 0.9, true);
        let flat: Vec<(usize, &PlanChild)> = plan
            .children
            .iter()
            .enumerate()
            .flat_map(|(a, row)| row.iter().map(move |c| (a, c)))
            .collect();
        assert_eq!(flat.len(), created.len());
        for ((action, plan_child), node_child) in flat.into_iter().zip(created) {
            if let Some(sub) = &plan_child.expand {
                let mut child_path = path.to_vec();
                child_path.push(PathStep { node: node.clone(), action: Some(action) });
                install_plan(tree, &node_child, sub, &child_path);
            }
        }
    }

    /// Clamped whole-tree recursion: the independent oracle.
    pub(crate) fn recursion_oracle(
        node: &std::sync::Arc<Node<LineModel>>,
        discount: f64,
    ) -> Bounds {
        if !node.is_expanded() {
            return node.bounds();
        }
        let total = node.scenario_count() as f64;
        let mut upper = f64::NEG_INFINITY;
        let mut lower = f64::NEG_INFINITY;
        for view in node.branch_views() {
            let mut bu = view.mean_step_reward;
            let mut bl = view.mean_step_reward;
            for (_, child) in &view.children {
                let cb = recursion_oracle(child, discount);
                let w = child.scenario_count() as f64 / total;
                bu += discount * w * cb.upper;
                bl += discount * w * cb.lower;
            }
            upper = upper.max(bu);
            lower = lower.max(bl);
        }
        let init = node.init_bounds();
        Bounds { upper: upper.min(init.upper), lower: lower.max(init.lower) }
    }

    #[test]
    fn backup_matches_recursive_oracle_on_random_trees() {
        let stream = RandomStream::new(31);
        for case in 0..60u32 {
            let (_, tree) = line_tree(6);
            let root = tree.root().clone();
            let ids: Vec<u32> = root.scenario_ids().to_vec();
            let mut salt = 0;
            let (plan, rec) = gen_plan(&ids, 0, &stream, case, &mut salt);
            tree.initialize_root(Bounds { upper: rec.upper + 0.5, lower: rec.lower - 0.5 });
            install_plan(&tree, &root, &plan, &[]);
            let mut checked = 0;
            tree.for_each_node(|n| {
                let expect = recursion_oracle(n, 0.9);
                let got = n.bounds();
                assert!(
                    (expect.upper - got.upper).abs() < 1e-9
                        && (expect.lower - got.lower).abs() < 1e-9,
                    "case {case} node {}: got {got:?} want {expect:?}",
                    n.id(),
                );
                checked += 1;
            });
            assert!(checked > 1, "case {case} built a trivial tree");
        }
    }
}
