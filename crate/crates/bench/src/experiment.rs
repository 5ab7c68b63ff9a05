//! Experiment execution and aggregation.

use despot_core::rng::derive_seed;
use despot_core::search::SearchConfig;
use despot_domains::BenchDomain;
use serde::{Deserialize, Serialize};

use crate::episode::{run_episode, EpisodeConfig, EpisodeRecord, PlannerVariant};

/// Wall-time overrun factor beyond which per-step node counts are normalized
/// by the planning time.
pub const OVERRUN_FACTOR: f64 = 1.05;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: String,
    /// Raw key/value text for the domain config (echoed into reports).
    pub domain_config: String,
    pub variants: Vec<PlannerVariant>,
    pub search: SearchConfig,
    pub episodes: usize,
    pub step_limit: usize,
    pub particle_count: usize,
    pub seed: u64,
    /// Run each variant's episodes on a small thread pool. Planner variants
    /// are instantiated per episode with disjoint seeds either way; keep this
    /// off for timing-sensitive comparisons.
    pub episodes_in_parallel: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.episodes == 0 {
            return Err("episode count must be >= 1".to_owned());
        }
        if self.variants.is_empty() {
            return Err("at least one planner variant is required".to_owned());
        }
        Ok(())
    }
}

/// Per-episode numbers derived from the raw record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub steps: usize,
    pub discounted_return: f64,
    pub success: Option<bool>,
    pub aborted: Option<String>,
    pub mean_node_count: f64,
    pub mean_node_count_normalized: f64,
    pub mean_trial_count: f64,
    pub mean_search_depth: f64,
    pub mean_plan_wall_ms: f64,
}

pub fn summarize_episode(
    episode: usize,
    seed: u64,
    record: &EpisodeRecord,
    budget_ms: f64,
) -> EpisodeSummary {
    let n = record.steps.len().max(1) as f64;
    let mut nodes = 0.0;
    let mut nodes_norm = 0.0;
    let mut trials = 0.0;
    let mut depth = 0.0;
    let mut wall = 0.0;
    for step in &record.steps {
        nodes += step.node_count as f64;
        nodes_norm += if step.wall_ms > OVERRUN_FACTOR * budget_ms {
            step.node_count as f64 * budget_ms / step.wall_ms
        } else {
            step.node_count as f64
        };
        trials += step.trial_count as f64;
        depth += step.max_depth as f64;
        wall += step.wall_ms;
    }
    EpisodeSummary {
        episode,
        seed,
        steps: record.steps.len(),
        discounted_return: record.discounted_return,
        success: record.success,
        aborted: record.aborted.clone(),
        mean_node_count: nodes / n,
        mean_node_count_normalized: nodes_norm / n,
        mean_trial_count: trials / n,
        mean_search_depth: depth / n,
        mean_plan_wall_ms: wall / n,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub episodes: usize,
    pub aborted_episodes: usize,
    pub mean_return: f64,
    pub se_return: f64,
    pub mean_node_count: f64,
    pub se_node_count: f64,
    pub mean_node_count_normalized: f64,
    pub mean_trial_count: f64,
    pub mean_search_depth: f64,
    pub mean_plan_wall_ms: f64,
    pub success_rate: Option<f64>,
    /// Normalized node-count ratio against the serial variant, when the
    /// experiment includes one.
    pub speedup_vs_serial: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VariantReport {
    pub variant: String,
    pub episodes: Vec<EpisodeSummary>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub domain: String,
    pub config: serde_json::Value,
    pub git_describe: String,
    pub hardware: String,
    pub variants: Vec<VariantReport>,
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(episodes: &[EpisodeSummary]) -> Aggregate {
    let returns: Vec<f64> = episodes.iter().map(|e| e.discounted_return).collect();
    let nodes: Vec<f64> = episodes.iter().map(|e| e.mean_node_count).collect();
    let nodes_norm: Vec<f64> = episodes.iter().map(|e| e.mean_node_count_normalized).collect();
    let (mean_return, se_return) = mean_and_se(&returns);
    let (mean_node_count, se_node_count) = mean_and_se(&nodes);
    let (mean_node_count_normalized, _) = mean_and_se(&nodes_norm);
    let successes: Vec<&bool> = episodes.iter().filter_map(|e| e.success.as_ref()).collect();
    let success_rate = if successes.is_empty() {
        None
    } else {
        Some(successes.iter().filter(|&&&s| s).count() as f64 / successes.len() as f64)
    };
    Aggregate {
        episodes: episodes.len(),
        aborted_episodes: episodes.iter().filter(|e| e.aborted.is_some()).count(),
        mean_return,
        se_return,
        mean_node_count,
        se_node_count,
        mean_node_count_normalized,
        mean_trial_count: episodes.iter().map(|e| e.mean_trial_count).sum::<f64>()
            / episodes.len().max(1) as f64,
        mean_search_depth: episodes.iter().map(|e| e.mean_search_depth).sum::<f64>()
            / episodes.len().max(1) as f64,
        mean_plan_wall_ms: episodes.iter().map(|e| e.mean_plan_wall_ms).sum::<f64>()
            / episodes.len().max(1) as f64,
        success_rate,
        speedup_vs_serial: None,
    }
}

/// Runs `episodes` seeded episodes of one variant.
pub fn run_variant<M: BenchDomain + Sync>(
    model: &M,
    config: &ExperimentConfig,
    variant: PlannerVariant,
) -> Vec<EpisodeSummary> {
    let budget_ms = config.search.time_budget.as_secs_f64() * 1e3;
    let episode_config = |i: usize| EpisodeConfig {
        variant,
        search: config.search.clone(),
        step_limit: config.step_limit,
        particle_count: config.particle_count,
        seed: derive_seed(config.seed, i as u64),
    };
    if config.episodes_in_parallel {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(vec![None; config.episodes]);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= config.episodes {
                        break;
                    }
                    let cfg = episode_config(i);
                    let record = run_episode(model, &cfg);
                    let summary = summarize_episode(i, cfg.seed, &record, budget_ms);
                    results.lock().expect("results mutex")[i] = Some(summary);
                });
            }
        });
        results
            .into_inner()
            .expect("results mutex")
            .into_iter()
            .map(|s| s.expect("episode ran"))
            .collect()
    } else {
        (0..config.episodes)
            .map(|i| {
                let cfg = episode_config(i);
                let record = run_episode(model, &cfg);
                summarize_episode(i, cfg.seed, &record, budget_ms)
            })
            .collect()
    }
}

/// Runs every variant and assembles the aggregate report. Speedups are the
/// normalized node-count ratios against the serial variant.
pub fn run_experiment<M: BenchDomain + Sync>(model: &M, config: &ExperimentConfig) -> Report {
    let mut variants = Vec::new();
    for &variant in &config.variants {
        let episodes = run_variant(model, config, variant);
        let aggregate = aggregate(&episodes);
        variants.push(VariantReport {
            variant: variant.name().to_owned(),
            episodes,
            aggregate,
        });
    }
    let serial_nodes = variants
        .iter()
        .find(|v| v.variant == PlannerVariant::Serial.name())
        .map(|v| v.aggregate.mean_node_count_normalized);
    if let Some(serial_nodes) = serial_nodes {
        for v in &mut variants {
            if serial_nodes > 0.0 {
                v.aggregate.speedup_vs_serial =
                    Some(v.aggregate.mean_node_count_normalized / serial_nodes);
            }
        }
    }
    Report {
        domain: config.domain.clone(),
        config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
        git_describe: git_describe(),
        hardware: hardware_note(),
        variants,
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .map(|out| String::from_utf8_lossy(&out.stdout).trim().to_owned())
        .unwrap_or_else(|| "unknown".to_owned())
}

fn hardware_note() -> String {
    let threads = std::thread::available_parallelism().map_or(0, |n| n.get());
    format!(
        "{}-{}, {} hardware threads",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads
    )
}
