//! Navigation in a partially known grid map.
//!
//! The robot starts somewhere on the top border and must reach the goal on
//! the bottom border through one of two gates in a known wall across the
//! middle row; which gate is open varies per episode. Known cells (the wall
//! and scattered landmarks) anchor localization; every other non-border cell
//! is occupied with probability 0.1 in the initial belief. Motion fails with
//! probability 0.03 and each of the eight adjacent-cell occupancy readings is
//! independently wrong with probability 0.03.
//!
//! Rewards: stay -0.2, move -0.1, crash -1 (position unchanged), goal +20
//! (terminal).

use despot_core::belief::Belief;
use despot_core::model::{assert_action, DespotModel, ModelSpec, StepOutcome};
use despot_core::rng::{derive_seed, RandomStream};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, KvConfig};
use crate::BenchDomain;

pub const STAY: usize = 0;
/// Moves 1..=8 in this order.
pub const DIRS: [(i32, i32); 8] = [
    (-1, 0),  // north
    (-1, 1),  // north-east
    (0, 1),   // east
    (1, 1),   // south-east
    (1, 0),   // south
    (1, -1),  // south-west
    (0, -1),  // west
    (-1, -1), // north-west
];

pub const STAY_REWARD: f64 = -0.2;
pub const MOVE_REWARD: f64 = -0.1;
pub const CRASH_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 20.0;

#[derive(Clone, Debug, PartialEq)]
pub struct NavConfig {
    pub size: u8,
    pub move_fail_prob: f64,
    pub obs_error_prob: f64,
    pub unknown_occupied_prob: f64,
    pub landmark_count: usize,
    pub layout_seed: u64,
    pub discount: f64,
    pub max_depth: u32,
}

impl Default for NavConfig {
    fn default() -> Self {
        // the 13x13 task: 169 cells, 45 known, 124 unknown
        NavConfig {
            size: 13,
            move_fail_prob: 0.03,
            obs_error_prob: 0.03,
            unknown_occupied_prob: 0.1,
            landmark_count: 18,
            layout_seed: 0,
            discount: 0.95,
            max_depth: 60,
        }
    }
}

impl NavConfig {
    /// Shrunken instance for exact-oracle tests.
    pub fn small(size: u8) -> Self {
        NavConfig {
            size,
            landmark_count: if size >= 5 { 2 } else { 1 },
            max_depth: 20,
            ..Default::default()
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        kv.check_keys(&[
            "size",
            "move_fail_prob",
            "obs_error_prob",
            "unknown_occupied_prob",
            "landmark_count",
            "layout_seed",
            "discount",
            "max_depth",
        ])?;
        let d = NavConfig::default();
        Ok(NavConfig {
            size: kv.get_u64("size", d.size as u64)? as u8,
            move_fail_prob: kv.get_f64("move_fail_prob", d.move_fail_prob)?,
            obs_error_prob: kv.get_f64("obs_error_prob", d.obs_error_prob)?,
            unknown_occupied_prob: kv.get_f64("unknown_occupied_prob", d.unknown_occupied_prob)?,
            landmark_count: kv.get_usize("landmark_count", d.landmark_count)?,
            layout_seed: kv.get_u64("layout_seed", d.layout_seed)?,
            discount: kv.get_f64("discount", d.discount)?,
            max_depth: kv.get_u64("max_depth", d.max_depth as u64)? as u32,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NavState {
    /// Cell index `row * size + col`.
    pub pos: u8,
    /// One bit per unknown cell, 1 = occupied.
    pub occupancy: u128,
    /// Which of the two gates is open.
    pub gate: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Cell {
    KnownFree,
    KnownOccupied,
    /// Open exactly when the state's gate equals the payload.
    Gate(u8),
    /// Occupancy read from the state bitmap at the payload bit.
    Unknown(u8),
}

#[derive(Debug)]
pub struct NavigationModel {
    spec: ModelSpec,
    config: NavConfig,
    cells: Vec<Cell>,
    unknown_count: usize,
    wall_row: u8,
    gate_cols: [u8; 2],
    goal: u8,
}

impl NavigationModel {
    pub fn new(config: NavConfig) -> Self {
        let n = config.size;
        assert!(n >= 3, "map must be at least 3x3");
        let wall_row = n / 2;
        let gate_cols = [n / 4, n - 1 - n / 4];
        assert_ne!(gate_cols[0], gate_cols[1], "gates must be distinct");
        let goal = (n - 1) * n + n / 2;
        let total = n as usize * n as usize;

        let mut cells = vec![None::<Cell>; total];
        for c in 0..n {
            cells[c as usize] = Some(Cell::KnownFree); // top border: start row
            let wall_idx = (wall_row * n + c) as usize;
            cells[wall_idx] = Some(if c == gate_cols[0] {
                Cell::Gate(0)
            } else if c == gate_cols[1] {
                Cell::Gate(1)
            } else {
                Cell::KnownOccupied
            });
        }
        cells[goal as usize] = Some(Cell::KnownFree);

        // seeded landmarks over the remaining cells
        let stream = RandomStream::new(derive_seed(config.layout_seed, 0x11a9d));
        let mut placed = 0;
        let mut draw = 0u32;
        while placed < config.landmark_count {
            let idx = stream.index(0, draw, total);
            draw += 1;
            assert!(draw < 100_000, "landmark placement did not converge");
            if cells[idx].is_none() {
                cells[idx] = Some(Cell::KnownOccupied);
                placed += 1;
            }
        }

        let mut unknown_count = 0usize;
        let cells: Vec<Cell> = cells
            .into_iter()
            .map(|c| {
                c.unwrap_or_else(|| {
                    let bit = unknown_count as u8;
                    unknown_count += 1;
                    Cell::Unknown(bit)
                })
            })
            .collect();
        assert!(unknown_count <= 128, "occupancy bitmap limited to 128 cells");

        NavigationModel {
            spec: ModelSpec::new(9, config.discount, config.max_depth),
            config,
            cells,
            unknown_count,
            wall_row,
            gate_cols,
            goal,
        }
    }

    pub fn config(&self) -> &NavConfig {
        &self.config
    }

    pub fn size(&self) -> u8 {
        self.config.size
    }

    pub fn goal(&self) -> u8 {
        self.goal
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_count
    }

    pub fn gate_cell(&self, gate: u8) -> u8 {
        self.wall_row * self.config.size + self.gate_cols[gate as usize % 2]
    }

    fn rc(&self, pos: u8) -> (i32, i32) {
        let n = self.config.size as i32;
        (pos as i32 / n, pos as i32 % n)
    }

    fn in_grid(&self, r: i32, c: i32) -> bool {
        let n = self.config.size as i32;
        r >= 0 && r < n && c >= 0 && c < n
    }

    /// Occupancy of (r, c) under the state's map; outside the grid counts as
    /// occupied.
    pub fn occupied(&self, state: &NavState, r: i32, c: i32) -> bool {
        if !self.in_grid(r, c) {
            return true;
        }
        let idx = (r * self.config.size as i32 + c) as usize;
        match self.cells[idx] {
            Cell::KnownFree => false,
            Cell::KnownOccupied => true,
            Cell::Gate(g) => g != state.gate,
            Cell::Unknown(bit) => state.occupancy >> bit & 1 == 1,
        }
    }

    fn chebyshev_to_goal(&self, pos: u8) -> u32 {
        let (r, c) = self.rc(pos);
        let (gr, gc) = self.rc(self.goal);
        ((r - gr).abs().max((c - gc).abs())) as u32
    }

    fn direction_action(&self, from: u8, to: u8) -> usize {
        let (r, c) = self.rc(from);
        let (tr, tc) = self.rc(to);
        let dir = ((tr - r).signum(), (tc - c).signum());
        DIRS.iter().position(|&d| d == dir).map(|i| i + 1).unwrap_or(1)
    }
}

impl DespotModel for NavigationModel {
    type State = NavState;
    type Observation = u8;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, state: &NavState) -> bool {
        state.pos == self.goal
    }

    fn step(
        &self,
        state: &NavState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<NavState, u8> {
        assert_action(&self.spec, action);
        let mut next = *state;
        let mut terminal = false;
        let reward = if action == STAY {
            STAY_REWARD
        } else {
            let (r, c) = self.rc(state.pos);
            let (dr, dc) = DIRS[action - 1];
            let (tr, tc) = (r + dr, c + dc);
            if self.occupied(state, tr, tc) {
                CRASH_REWARD
            } else if stream.bernoulli(depth, 0, self.config.move_fail_prob) {
                MOVE_REWARD
            } else {
                next.pos = (tr * self.config.size as i32 + tc) as u8;
                if next.pos == self.goal {
                    terminal = true;
                    GOAL_REWARD
                } else {
                    MOVE_REWARD
                }
            }
        };
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal }
    }

    fn observe(&self, next_state: &NavState, _action: usize, stream: &RandomStream, depth: u32) -> u8 {
        let (r, c) = self.rc(next_state.pos);
        let mut bits = 0u8;
        for (d, (dr, dc)) in DIRS.iter().enumerate() {
            let truth = self.occupied(next_state, r + dr, c + dc);
            let flipped = stream.bernoulli(depth, 1 + d as u32, self.config.obs_error_prob);
            if truth != flipped {
                bits |= 1 << d;
            }
        }
        bits
    }

    fn upper_bound_heuristic(&self, state: &NavState) -> f64 {
        let dist = self.chebyshev_to_goal(state.pos);
        GOAL_REWARD * self.spec.discount.powi(dist.saturating_sub(1) as i32)
    }

    fn lower_bound_heuristic(&self, _state: &NavState) -> f64 {
        MOVE_REWARD / (1.0 - self.spec.discount)
    }

    fn default_policy_action(&self, state: &NavState, _depth: u32) -> usize {
        let (r, _) = self.rc(state.pos);
        let target = if (r as u8) < self.wall_row {
            self.gate_cell(state.gate)
        } else {
            self.goal
        };
        if target == state.pos {
            return 1 + DIRS.iter().position(|&d| d == (1, 0)).unwrap(); // south
        }
        self.direction_action(state.pos, target)
    }

    fn observation_likelihood(&self, next_state: &NavState, _action: usize, observation: &u8) -> f64 {
        let (r, c) = self.rc(next_state.pos);
        let mut likelihood = 1.0;
        for (d, (dr, dc)) in DIRS.iter().enumerate() {
            let truth = self.occupied(next_state, r + dr, c + dc);
            let read = observation >> d & 1 == 1;
            likelihood *= if read == truth {
                1.0 - self.config.obs_error_prob
            } else {
                self.config.obs_error_prob
            };
        }
        likelihood
    }
}

impl BenchDomain for NavigationModel {
    fn initial_belief(&self, particles: usize, seed: u64) -> Belief<NavState> {
        let n = self.config.size as usize;
        let states: Vec<NavState> = (0..particles)
            .map(|i| {
                let stream = RandomStream::new(derive_seed(seed, i as u64));
                let mut occupancy = 0u128;
                for bit in 0..self.unknown_count {
                    if stream.bernoulli(1, bit as u32, self.config.unknown_occupied_prob) {
                        occupancy |= 1 << bit;
                    }
                }
                NavState {
                    pos: stream.index(0, 0, n) as u8,
                    occupancy,
                    gate: stream.bernoulli(0, 1, 0.5) as u8,
                }
            })
            .collect();
        Belief::uniform(states).expect("particles >= 1")
    }

    fn episode_success(&self, terminated: bool, steps: usize) -> Option<bool> {
        // success means reaching the goal within 60 steps
        Some(terminated && steps <= 60)
    }
}
