//! Multi-agent rock sample.
//!
//! Two robots explore an `n x n` grid with `m` rocks and plan jointly: each
//! joint action decodes into one sub-action per robot (4 moves, Sample, or
//! Sense rock j), giving `(5 + m)^2` actions. Sampling on a rock cell pays
//! +10 if the rock is good (the rock then turns bad) and -10 otherwise;
//! leaving over the east border pays +10 and retires the robot; the episode
//! ends when both robots have left. Sensor accuracy decays exponentially
//! with distance: `0.5 * (1 + 2^(-d / d0))`, exact at distance zero.
//!
//! Moves are deterministic; off-grid moves other than the east exit are
//! no-ops. Sensors report end-of-step rock status, so the observation model
//! conditions exactly on the successor state.

use despot_core::belief::Belief;
use despot_core::model::{assert_action, DespotModel, ModelSpec, StepOutcome};
use despot_core::rng::{derive_seed, RandomStream};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, KvConfig};
use crate::BenchDomain;

pub const SAMPLE_REWARD: f64 = 10.0;
pub const SAMPLE_PENALTY: f64 = -10.0;
pub const EXIT_REWARD: f64 = 10.0;

/// Sub-actions per robot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubAction {
    North,
    East,
    South,
    West,
    Sample,
    Sense(u8),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarsConfig {
    pub grid: u8,
    pub rock_count: u8,
    pub layout_seed: u64,
    /// Distance at which sensing accuracy halves its excess over chance.
    pub sensor_halflife: f64,
    pub discount: f64,
    pub max_depth: u32,
}

impl MarsConfig {
    pub fn new(grid: u8, rock_count: u8) -> Self {
        MarsConfig {
            grid,
            rock_count,
            layout_seed: 0,
            sensor_halflife: 4.0,
            discount: 0.95,
            max_depth: 20,
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        kv.check_keys(&[
            "grid",
            "rock_count",
            "layout_seed",
            "sensor_halflife",
            "discount",
            "max_depth",
        ])?;
        let d = MarsConfig::new(11, 11);
        Ok(MarsConfig {
            grid: kv.get_u64("grid", d.grid as u64)? as u8,
            rock_count: kv.get_u64("rock_count", d.rock_count as u64)? as u8,
            layout_seed: kv.get_u64("layout_seed", d.layout_seed)?,
            sensor_halflife: kv.get_f64("sensor_halflife", d.sensor_halflife)?,
            discount: kv.get_f64("discount", d.discount)?,
            max_depth: kv.get_u64("max_depth", d.max_depth as u64)? as u32,
        })
    }
}

/// (x, y) with x growing eastward; `None` once the robot has exited.
pub type RobotPos = Option<(u8, u8)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarsState {
    pub robots: [RobotPos; 2],
    /// Bit j set = rock j is good.
    pub rocks: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SenseReading {
    None,
    Good,
    Bad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarsObs {
    pub readings: [SenseReading; 2],
}

#[derive(Debug)]
pub struct MarsModel {
    spec: ModelSpec,
    config: MarsConfig,
    rock_cells: Vec<(u8, u8)>,
    sub_count: usize,
}

impl MarsModel {
    pub fn new(config: MarsConfig) -> Self {
        let n = config.grid;
        let m = config.rock_count;
        assert!(n >= 2 && m >= 1, "grid >= 2 and at least one rock");
        assert!(m <= 32, "rock status is a 32-bit mask");
        let sub_count = 5 + m as usize;
        let stream = RandomStream::new(derive_seed(config.layout_seed, 0x20c5));
        let mut rock_cells = Vec::with_capacity(m as usize);
        let mut draw = 0u32;
        while rock_cells.len() < m as usize {
            let x = stream.index(0, draw, n as usize) as u8;
            let y = stream.index(1, draw, n as usize) as u8;
            draw += 1;
            assert!(draw < 100_000, "rock placement did not converge");
            if !rock_cells.contains(&(x, y)) {
                rock_cells.push((x, y));
            }
        }
        MarsModel {
            spec: ModelSpec::new(sub_count * sub_count, config.discount, config.max_depth),
            config,
            rock_cells,
            sub_count,
        }
    }

    pub fn config(&self) -> &MarsConfig {
        &self.config
    }

    pub fn rock_cells(&self) -> &[(u8, u8)] {
        &self.rock_cells
    }

    pub fn decode(&self, action: usize) -> [SubAction; 2] {
        [self.sub(action / self.sub_count), self.sub(action % self.sub_count)]
    }

    pub fn encode(&self, subs: [SubAction; 2]) -> usize {
        self.sub_index(subs[0]) * self.sub_count + self.sub_index(subs[1])
    }

    fn sub(&self, idx: usize) -> SubAction {
        match idx {
            0 => SubAction::North,
            1 => SubAction::East,
            2 => SubAction::South,
            3 => SubAction::West,
            4 => SubAction::Sample,
            j => SubAction::Sense((j - 5) as u8),
        }
    }

    fn sub_index(&self, sub: SubAction) -> usize {
        match sub {
            SubAction::North => 0,
            SubAction::East => 1,
            SubAction::South => 2,
            SubAction::West => 3,
            SubAction::Sample => 4,
            SubAction::Sense(j) => 5 + j as usize,
        }
    }

    fn rock_at(&self, pos: (u8, u8)) -> Option<usize> {
        self.rock_cells.iter().position(|&cell| cell == pos)
    }

    pub fn sensing_accuracy(&self, robot: (u8, u8), rock: usize) -> f64 {
        let (rx, ry) = self.rock_cells[rock];
        let dx = robot.0 as f64 - rx as f64;
        let dy = robot.1 as f64 - ry as f64;
        let dist = (dx * dx + dy * dy).sqrt();
        0.5 * (1.0 + (2.0f64).powf(-dist / self.config.sensor_halflife))
    }

    fn good(state: &MarsState, rock: usize) -> bool {
        state.rocks >> rock & 1 == 1
    }
}

impl DespotModel for MarsModel {
    type State = MarsState;
    type Observation = MarsObs;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, state: &MarsState) -> bool {
        state.robots.iter().all(|r| r.is_none())
    }

    fn step(
        &self,
        state: &MarsState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<MarsState, MarsObs> {
        assert_action(&self.spec, action);
        let subs = self.decode(action);
        let mut next = *state;
        let mut reward = 0.0;
        // movement and sampling resolve robot 0 first, then robot 1
        for (i, sub) in subs.iter().enumerate() {
            let Some((x, y)) = next.robots[i] else { continue };
            match sub {
                SubAction::North => {
                    if y + 1 < self.config.grid {
                        next.robots[i] = Some((x, y + 1));
                    }
                }
                SubAction::South => {
                    if y > 0 {
                        next.robots[i] = Some((x, y - 1));
                    }
                }
                SubAction::West => {
                    if x > 0 {
                        next.robots[i] = Some((x - 1, y));
                    }
                }
                SubAction::East => {
                    if x + 1 < self.config.grid {
                        next.robots[i] = Some((x + 1, y));
                    } else {
                        reward += EXIT_REWARD;
                        next.robots[i] = None;
                    }
                }
                SubAction::Sample => match self.rock_at((x, y)) {
                    Some(j) if Self::good(&next, j) => {
                        reward += SAMPLE_REWARD;
                        next.rocks &= !(1 << j);
                    }
                    _ => reward += SAMPLE_PENALTY,
                },
                SubAction::Sense(_) => {}
            }
        }
        let terminal = self.is_terminal(&next);
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal }
    }

    fn observe(
        &self,
        next_state: &MarsState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> MarsObs {
        let subs = self.decode(action);
        let mut readings = [SenseReading::None; 2];
        for (i, sub) in subs.iter().enumerate() {
            if let (SubAction::Sense(j), Some(pos)) = (sub, next_state.robots[i]) {
                let rock = *j as usize % self.rock_cells.len();
                let accuracy = self.sensing_accuracy(pos, rock);
                let truth = Self::good(next_state, rock);
                let read = if stream.bernoulli(depth, i as u32, accuracy) { truth } else { !truth };
                readings[i] = if read { SenseReading::Good } else { SenseReading::Bad };
            }
        }
        MarsObs { readings }
    }

    fn upper_bound_heuristic(&self, state: &MarsState) -> f64 {
        let goods = state.rocks.count_ones() as f64;
        let active = state.robots.iter().filter(|r| r.is_some()).count() as f64;
        SAMPLE_REWARD * goods + EXIT_REWARD * active
    }

    fn default_policy_action(&self, state: &MarsState, _depth: u32) -> usize {
        let subs: Vec<SubAction> = state
            .robots
            .iter()
            .map(|robot| match robot {
                Some(pos) => match self.rock_at(*pos) {
                    Some(j) if Self::good(state, j) => SubAction::Sample,
                    _ => SubAction::East,
                },
                None => SubAction::East, // retired robots no-op
            })
            .collect();
        self.encode([subs[0], subs[1]])
    }

    fn observation_likelihood(
        &self,
        next_state: &MarsState,
        action: usize,
        observation: &MarsObs,
    ) -> f64 {
        let subs = self.decode(action);
        let mut likelihood = 1.0;
        for (i, sub) in subs.iter().enumerate() {
            let expected_sense = matches!(
                (sub, next_state.robots[i]),
                (SubAction::Sense(_), Some(_))
            );
            match (expected_sense, observation.readings[i]) {
                (false, SenseReading::None) => {}
                (false, _) | (true, SenseReading::None) => return 0.0,
                (true, reading) => {
                    let (SubAction::Sense(j), Some(pos)) = (sub, next_state.robots[i]) else {
                        unreachable!()
                    };
                    let rock = *j as usize % self.rock_cells.len();
                    let accuracy = self.sensing_accuracy(pos, rock);
                    let truth = Self::good(next_state, rock);
                    let read_good = reading == SenseReading::Good;
                    likelihood *= if read_good == truth { accuracy } else { 1.0 - accuracy };
                }
            }
        }
        likelihood
    }
}

impl BenchDomain for MarsModel {
    fn initial_belief(&self, particles: usize, seed: u64) -> Belief<MarsState> {
        let n = self.config.grid;
        let start = [Some((0, n / 3)), Some((0, n - 1 - n / 3))];
        let states: Vec<MarsState> = (0..particles)
            .map(|i| {
                let stream = RandomStream::new(derive_seed(seed, i as u64));
                let mut rocks = 0u32;
                for j in 0..self.config.rock_count {
                    if stream.bernoulli(0, j as u32, 0.5) {
                        rocks |= 1 << j;
                    }
                }
                MarsState { robots: start, rocks }
            })
            .collect();
        Belief::uniform(states).expect("particles >= 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model11() -> MarsModel {
        MarsModel::new(MarsConfig::new(11, 11))
    }

    #[test]
    fn action_space_sizes_match_presets() {
        assert_eq!(model11().spec().action_count, 256);
        assert_eq!(MarsModel::new(MarsConfig::new(15, 15)).spec().action_count, 400);
        assert_eq!(MarsModel::new(MarsConfig::new(20, 20)).spec().action_count, 625);
    }

    #[test]
    fn decode_round_trips() {
        let model = model11();
        for a in 0..model.spec().action_count {
            assert_eq!(model.encode(model.decode(a)), a);
        }
    }

    #[test]
    fn sampling_good_rock_pays_and_degrades() {
        let model = model11();
        let rock = model.rock_cells()[0];
        let state = MarsState {
            robots: [Some(rock), Some((0, 0))],
            rocks: 1,
        };
        // robot 0 samples, robot 1 moves east
        let action = model.encode([SubAction::Sample, SubAction::East]);
        let out = model.step(&state, action, &RandomStream::new(3), 1);
        assert_eq!(out.reward, SAMPLE_REWARD);
        assert_eq!(out.next_state.rocks, 0);
        // sampling again on the now-bad rock is penalized
        let out2 = model.step(&out.next_state, action, &RandomStream::new(3), 2);
        assert_eq!(out2.reward, SAMPLE_PENALTY);
    }

    #[test]
    fn east_exit_pays_and_retires() {
        let model = model11();
        let n = model.config().grid;
        let state = MarsState {
            robots: [Some((n - 1, 4)), None],
            rocks: 0,
        };
        let action = model.encode([SubAction::East, SubAction::East]);
        let out = model.step(&state, action, &RandomStream::new(3), 1);
        assert_eq!(out.reward, EXIT_REWARD);
        assert!(out.terminal);
        assert!(model.is_terminal(&out.next_state));
    }

    #[test]
    fn zero_distance_sensing_is_exact() {
        let model = model11();
        let rock = model.rock_cells()[2];
        assert_eq!(model.sensing_accuracy(rock, 2), 1.0);
        // far away it approaches a coin flip from above
        let acc = model.sensing_accuracy((0, 0), 2);
        assert!(acc > 0.5 && acc <= 1.0);
    }

    #[test]
    fn heuristic_for_bad_rocks_at_border() {
        let model = model11();
        let n = model.config().grid;
        // all rocks bad, one robot at the east border, the other exited
        let state = MarsState { robots: [Some((n - 1, 3)), None], rocks: 0 };
        assert_eq!(model.upper_bound_heuristic(&state), 10.0);
    }

    #[test]
    fn likelihood_consistent_with_observe() {
        let model = model11();
        let state = MarsState { robots: [Some((2, 3)), Some((5, 5))], rocks: 0b1011 };
        for seed in 0..40u64 {
            let stream = RandomStream::new(seed);
            let action = model.encode([SubAction::Sense(1), SubAction::Sense(3)]);
            let out = model.step(&state, action, &stream, 1);
            assert!(model.observation_likelihood(&out.next_state, action, &out.observation) > 0.0);
        }
        // a reading where none is expected is impossible
        let action = model.encode([SubAction::North, SubAction::North]);
        let impossible = MarsObs { readings: [SenseReading::Good, SenseReading::None] };
        assert_eq!(model.observation_likelihood(&state, action, &impossible), 0.0);
    }

    #[test]
    fn sense_likelihoods_sum_to_one() {
        let model = model11();
        let state = MarsState { robots: [Some((2, 3)), Some((5, 5))], rocks: 0b1 };
        let action = model.encode([SubAction::Sense(0), SubAction::Sample]);
        let mut total = 0.0;
        for r0 in [SenseReading::None, SenseReading::Good, SenseReading::Bad] {
            for r1 in [SenseReading::None, SenseReading::Good, SenseReading::Bad] {
                total += model.observation_likelihood(
                    &state,
                    action,
                    &MarsObs { readings: [r0, r1] },
                );
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}
