//! Speed control for a vehicle driving along a fixed straight path through a
//! crowd of pedestrians.
//!
//! The vehicle observes every position and velocity exactly (discretized),
//! but not the pedestrians' goals; those must be inferred from motion.
//! Pedestrians walk toward their goal at constant speed with Gaussian
//! heading noise. Three actions (accelerate, decelerate, maintain); speed
//! changes fail with probability 0.01.
//!
//! Rewards (config defaults, documented here because the scheme is a config
//! choice): per-step time cost -0.1, deceleration smoothness penalty -0.1,
//! goal +20 (terminal), collision `collision_base * (0.5 + speed^2)`
//! (terminal). The dynamics factor into 1 + num_pedestrians independent
//! elements: element 0 moves the vehicle and scores progress, element i
//! moves pedestrian i-1 and scores its collision against the already-updated
//! vehicle pose.
//!
//! The benchmark setting gives the vehicle 200 steps to reach its goal; that
//! horizon is a harness step limit (`--step-limit 200`), not part of the
//! state.

use despot_core::belief::{Belief, BeliefError, Particle};
use despot_core::model::{assert_action, DespotModel, ModelSpec, PartialStep, StepOutcome};
use despot_core::rng::{derive_seed, RandomStream};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, KvConfig};
use crate::BenchDomain;

pub const ACCELERATE: usize = 0;
pub const DECELERATE: usize = 1;
pub const MAINTAIN: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct DriveConfig {
    pub pedestrians: usize,
    pub path_length: f64,
    pub dt: f64,
    /// Speed change per accelerate/decelerate decision.
    pub accel: f64,
    pub max_speed: f64,
    pub control_fail_prob: f64,
    pub ped_speed: f64,
    pub heading_noise_std: f64,
    pub collision_radius: f64,
    pub goal_count: usize,
    pub layout_seed: u64,
    /// Observation discretization bins.
    pub pos_bin: f64,
    pub speed_bin: f64,
    pub time_cost: f64,
    pub smooth_penalty: f64,
    pub goal_reward: f64,
    pub collision_base: f64,
    pub discount: f64,
    pub max_depth: u32,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig {
            pedestrians: 6,
            path_length: 30.0,
            dt: 0.3,
            accel: 0.5,
            max_speed: 2.0,
            control_fail_prob: 0.01,
            ped_speed: 1.2,
            heading_noise_std: 0.3,
            collision_radius: 1.0,
            goal_count: 4,
            layout_seed: 0,
            pos_bin: 0.5,
            speed_bin: 0.03,
            time_cost: -0.1,
            smooth_penalty: -0.1,
            goal_reward: 20.0,
            collision_base: -100.0,
            discount: 0.95,
            max_depth: 30,
        }
    }
}

impl DriveConfig {
    pub fn with_pedestrians(pedestrians: usize) -> Self {
        DriveConfig { pedestrians, ..Default::default() }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        kv.check_keys(&[
            "pedestrians",
            "path_length",
            "dt",
            "accel",
            "max_speed",
            "control_fail_prob",
            "ped_speed",
            "heading_noise_std",
            "collision_radius",
            "goal_count",
            "layout_seed",
            "pos_bin",
            "speed_bin",
            "time_cost",
            "smooth_penalty",
            "goal_reward",
            "collision_base",
            "discount",
            "max_depth",
        ])?;
        let d = DriveConfig::default();
        Ok(DriveConfig {
            pedestrians: kv.get_usize("pedestrians", d.pedestrians)?,
            path_length: kv.get_f64("path_length", d.path_length)?,
            dt: kv.get_f64("dt", d.dt)?,
            accel: kv.get_f64("accel", d.accel)?,
            max_speed: kv.get_f64("max_speed", d.max_speed)?,
            control_fail_prob: kv.get_f64("control_fail_prob", d.control_fail_prob)?,
            ped_speed: kv.get_f64("ped_speed", d.ped_speed)?,
            heading_noise_std: kv.get_f64("heading_noise_std", d.heading_noise_std)?,
            collision_radius: kv.get_f64("collision_radius", d.collision_radius)?,
            goal_count: kv.get_usize("goal_count", d.goal_count)?,
            layout_seed: kv.get_u64("layout_seed", d.layout_seed)?,
            pos_bin: kv.get_f64("pos_bin", d.pos_bin)?,
            speed_bin: kv.get_f64("speed_bin", d.speed_bin)?,
            time_cost: kv.get_f64("time_cost", d.time_cost)?,
            smooth_penalty: kv.get_f64("smooth_penalty", d.smooth_penalty)?,
            goal_reward: kv.get_f64("goal_reward", d.goal_reward)?,
            collision_base: kv.get_f64("collision_base", d.collision_base)?,
            discount: kv.get_f64("discount", d.discount)?,
            max_depth: kv.get_u64("max_depth", d.max_depth as u64)? as u32,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ped {
    pub x: f64,
    pub y: f64,
    /// Hidden goal index into the model's goal list.
    pub goal: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveState {
    /// Distance traveled along the path (the path runs along +x at y = 0).
    pub pos: f64,
    pub speed: f64,
    pub peds: Vec<Ped>,
    pub collided: bool,
}

/// Discretized observable state. Goals never appear here.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DriveObs {
    pub pos_bin: i32,
    pub speed_bin: i32,
    pub peds: Vec<(i32, i32)>,
}

#[derive(Debug)]
pub struct DrivingModel {
    spec: ModelSpec,
    config: DriveConfig,
    goals: Vec<(f64, f64)>,
}

impl DrivingModel {
    pub fn new(config: DriveConfig) -> Self {
        assert!(config.goal_count >= 1, "need at least one pedestrian goal");
        assert!(config.pedestrians <= 64, "pedestrian count capped at 64");
        let stream = RandomStream::new(derive_seed(config.layout_seed, 0xd21e));
        let goals = (0..config.goal_count)
            .map(|g| {
                let x = stream.uniform(0, g as u32) * config.path_length;
                let side = if g % 2 == 0 { 1.0 } else { -1.0 };
                let y = side * (6.0 + 4.0 * stream.uniform(1, g as u32));
                (x, y)
            })
            .collect();
        DrivingModel {
            spec: ModelSpec::new(3, config.discount, config.max_depth)
                .with_elements(1 + config.pedestrians),
            config,
            goals,
        }
    }

    pub fn config(&self) -> &DriveConfig {
        &self.config
    }

    pub fn goals(&self) -> &[(f64, f64)] {
        &self.goals
    }

    fn vehicle_update(&self, state: &mut DriveState, action: usize, stream: &RandomStream, depth: u32) -> (f64, bool) {
        let cfg = &self.config;
        let mut reward = cfg.time_cost;
        match action {
            ACCELERATE => {
                if !stream.bernoulli(depth, 0, cfg.control_fail_prob) {
                    state.speed = (state.speed + cfg.accel).min(cfg.max_speed);
                }
            }
            DECELERATE => {
                reward += cfg.smooth_penalty;
                if !stream.bernoulli(depth, 0, cfg.control_fail_prob) {
                    state.speed = (state.speed - cfg.accel).max(0.0);
                }
            }
            _ => {}
        }
        state.pos += state.speed * cfg.dt;
        let mut terminal = false;
        if state.pos >= cfg.path_length {
            reward += cfg.goal_reward;
            terminal = true;
        }
        (reward, terminal)
    }

    /// Moves pedestrian `i` and scores its collision against the (already
    /// updated) vehicle pose.
    fn ped_update(&self, state: &mut DriveState, i: usize, stream: &RandomStream, depth: u32) -> (f64, bool) {
        let cfg = &self.config;
        let goal = self.goals[state.peds[i].goal as usize % self.goals.len()];
        let ped = &mut state.peds[i];
        let dx = goal.0 - ped.x;
        let dy = goal.1 - ped.y;
        if dx * dx + dy * dy > 1e-12 {
            let heading =
                dy.atan2(dx) + cfg.heading_noise_std * stream.normal(depth, 1 + i as u32);
            ped.x += cfg.ped_speed * cfg.dt * heading.cos();
            ped.y += cfg.ped_speed * cfg.dt * heading.sin();
        }
        let rx = ped.x - state.pos;
        let ry = ped.y;
        if rx * rx + ry * ry < cfg.collision_radius * cfg.collision_radius {
            state.collided = true;
            (cfg.collision_base * (0.5 + state.speed * state.speed), true)
        } else {
            (0.0, false)
        }
    }

    fn discretize(&self, state: &DriveState) -> DriveObs {
        let cfg = &self.config;
        DriveObs {
            pos_bin: (state.pos / cfg.pos_bin).floor() as i32,
            speed_bin: (state.speed / cfg.speed_bin).floor() as i32,
            peds: state
                .peds
                .iter()
                .map(|p| {
                    (
                        (p.x / cfg.pos_bin).floor() as i32,
                        (p.y / cfg.pos_bin).floor() as i32,
                    )
                })
                .collect(),
        }
    }

    fn bin_center(&self, bin: i32) -> f64 {
        (bin as f64 + 0.5) * self.config.pos_bin
    }
}

impl DespotModel for DrivingModel {
    type State = DriveState;
    type Observation = DriveObs;

    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn is_terminal(&self, state: &DriveState) -> bool {
        state.collided || state.pos >= self.config.path_length
    }

    /// Monolithic route: deliberately written in-place, independent of the
    /// factored route, with matching element order (vehicle, then each
    /// pedestrian) so the two agree bit-exactly.
    fn step(
        &self,
        state: &DriveState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
    ) -> StepOutcome<DriveState, DriveObs> {
        assert_action(&self.spec, action);
        let mut next = state.clone();
        let (mut reward, mut terminal) = self.vehicle_update(&mut next, action, stream, depth);
        for i in 0..next.peds.len() {
            let (r, t) = self.ped_update(&mut next, i, stream, depth);
            reward += r;
            terminal |= t;
        }
        let observation = self.observe(&next, action, stream, depth);
        StepOutcome { next_state: next, observation, reward, terminal }
    }

    fn observe(&self, next_state: &DriveState, _action: usize, _stream: &RandomStream, _depth: u32) -> DriveObs {
        self.discretize(next_state)
    }

    fn step_factored(
        &self,
        state: &DriveState,
        action: usize,
        stream: &RandomStream,
        depth: u32,
        element: usize,
    ) -> PartialStep<DriveState> {
        assert_action(&self.spec, action);
        assert!(element < self.spec.factored_element_count, "element index out of range");
        let mut next = state.clone();
        let (reward, terminal) = if element == 0 {
            self.vehicle_update(&mut next, action, stream, depth)
        } else {
            self.ped_update(&mut next, element - 1, stream, depth)
        };
        PartialStep { state: next, reward, terminal }
    }

    fn upper_bound_heuristic(&self, state: &DriveState) -> f64 {
        let cfg = &self.config;
        if state.pos >= cfg.path_length {
            return cfg.goal_reward;
        }
        let steps = ((cfg.path_length - state.pos) / (cfg.max_speed * cfg.dt)).ceil().max(1.0);
        cfg.goal_reward * self.spec.discount.powi(steps as i32 - 1)
    }

    fn lower_bound_heuristic(&self, _state: &DriveState) -> f64 {
        self.config.time_cost / (1.0 - self.spec.discount)
    }

    fn default_policy_action(&self, state: &DriveState, _depth: u32) -> usize {
        let cfg = &self.config;
        let danger = state.peds.iter().any(|p| {
            let rx = p.x - state.pos;
            let ry = p.y;
            rx > -cfg.collision_radius
                && rx < 3.0 * cfg.collision_radius
                && ry.abs() < 2.0 * cfg.collision_radius
        });
        if danger {
            DECELERATE
        } else if state.speed + 1e-9 < cfg.max_speed {
            ACCELERATE
        } else {
            MAINTAIN
        }
    }

    fn observation_likelihood(&self, next_state: &DriveState, _action: usize, observation: &DriveObs) -> f64 {
        if self.discretize(next_state) == *observation {
            1.0
        } else {
            0.0
        }
    }
}

impl BenchDomain for DrivingModel {
    fn initial_belief(&self, particles: usize, seed: u64) -> Belief<DriveState> {
        let cfg = &self.config;
        // observable layout is shared; only the hidden goals vary
        let layout = RandomStream::new(derive_seed(cfg.layout_seed, 0xbed));
        let base: Vec<(f64, f64)> = (0..cfg.pedestrians)
            .map(|i| {
                let x = 3.0 + layout.uniform(0, i as u32) * (cfg.path_length - 6.0);
                let y = layout.uniform(1, i as u32) * 12.0 - 6.0;
                (x, y)
            })
            .collect();
        let states: Vec<DriveState> = (0..particles)
            .map(|p| {
                let stream = RandomStream::new(derive_seed(seed, p as u64));
                DriveState {
                    pos: 0.0,
                    speed: 0.0,
                    peds: base
                        .iter()
                        .enumerate()
                        .map(|(i, &(x, y))| Ped {
                            x,
                            y,
                            goal: stream.index(0, i as u32, self.goals.len()) as u8,
                        })
                        .collect(),
                    collided: false,
                }
            })
            .collect();
        Belief::uniform(states).expect("particles >= 1")
    }

    /// Structured update: observable components come from the observation
    /// exactly (bin centers); only the hidden goal hypotheses are reweighted,
    /// by how well each goal explains the observed heading.
    fn belief_update_override(
        &self,
        belief: &Belief<DriveState>,
        _action: usize,
        observation: &DriveObs,
        particles: usize,
        seed: u64,
    ) -> Option<Result<Belief<DriveState>, BeliefError>> {
        let cfg = &self.config;
        let sigma = cfg.heading_noise_std.max(1e-3);
        let decoded_pos = self.bin_center(observation.pos_bin);
        let decoded_speed = (observation.speed_bin as f64 + 0.5) * cfg.speed_bin;
        let mut weighted = Vec::with_capacity(belief.len());
        for particle in belief.particles() {
            let mut weight = particle.weight;
            let mut peds = Vec::with_capacity(particle.state.peds.len());
            for (i, ped) in particle.state.peds.iter().enumerate() {
                let ox = self.bin_center(observation.peds[i].0);
                let oy = self.bin_center(observation.peds[i].1);
                let (dx, dy) = (ox - ped.x, oy - ped.y);
                if dx * dx + dy * dy > 1e-9 {
                    let goal = self.goals[ped.goal as usize % self.goals.len()];
                    let expected = (goal.1 - ped.y).atan2(goal.0 - ped.x);
                    let mut err = dy.atan2(dx) - expected;
                    while err > std::f64::consts::PI {
                        err -= 2.0 * std::f64::consts::PI;
                    }
                    while err < -std::f64::consts::PI {
                        err += 2.0 * std::f64::consts::PI;
                    }
                    weight *= (-0.5 * (err / sigma).powi(2)).exp() + 1e-9;
                }
                peds.push(Ped { x: ox, y: oy, goal: ped.goal });
            }
            weighted.push(Particle {
                state: DriveState {
                    pos: decoded_pos,
                    speed: decoded_speed,
                    peds,
                    collided: false,
                },
                weight,
            });
        }
        let posterior = match Belief::new(weighted) {
            Ok(b) => b,
            Err(e) => return Some(Err(e)),
        };
        // systematic resampling to the requested particle count
        let stream = RandomStream::new(derive_seed(seed, 0x5e5a));
        let resampled: Vec<DriveState> = posterior
            .systematic_indices(particles, stream.uniform(0, 0))
            .into_iter()
            .map(|idx| posterior.particles()[idx].state.clone())
            .collect();
        Some(Belief::uniform(resampled))
    }
}
