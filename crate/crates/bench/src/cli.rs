//! The `despot-bench` command line.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use despot_core::model::DespotModel;
use despot_core::search::SearchConfig;
use despot_domains::{build_domain, AnyDomain, BenchDomain, KvConfig};

use crate::episode::{plan, run_episode, EpisodeConfig, PlannerVariant};
use crate::experiment::{run_experiment, ExperimentConfig, Report};
use crate::report::emit_results;

/// Dispatches a generic closure over whichever domain was built.
#[macro_export]
macro_rules! with_domain {
    ($any:expr, $model:ident => $body:expr) => {
        match $any {
            despot_domains::AnyDomain::Navigation($model) => $body,
            despot_domains::AnyDomain::Mars($model) => $body,
            despot_domains::AnyDomain::Driving($model) => $body,
            despot_domains::AnyDomain::Tiger($model) => $body,
            despot_domains::AnyDomain::Chain($model) => $body,
        }
    };
}

#[derive(Parser)]
#[command(
    name = "despot-bench",
    about = "Closed-loop evaluation harness for the despot planner",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct DomainOpts {
    /// Domain name: navigation | mars | driving | tiger | chain.
    #[arg(long)]
    pub domain: String,
    /// Path to a `key = value` domain config file.
    #[arg(long)]
    pub domain_config: Option<PathBuf>,
}

impl DomainOpts {
    pub fn build(&self) -> Result<AnyDomain, String> {
        let text = match &self.domain_config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
            None => String::new(),
        };
        let kv = KvConfig::parse(&text).map_err(|e| e.to_string())?;
        build_domain(&self.domain, &kv).map_err(|e| e.to_string())
    }

    pub fn config_text(&self) -> String {
        self.domain_config
            .as_ref()
            .and_then(|p| std::fs::read_to_string(p).ok())
            .unwrap_or_default()
    }
}

#[derive(Args, Clone)]
pub struct SearchOpts {
    /// Number of sampled scenarios, K.
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    /// Discount factor (defaults to the domain's).
    #[arg(long)]
    pub discount: Option<f64>,
    /// Target-uncertainty factor xi.
    #[arg(long, default_value_t = 0.95)]
    pub xi: f64,
    /// UCT exploration scale for parallel action selection.
    #[arg(long, default_value_t = 0.5)]
    pub c_a: f64,
    /// Virtual-loss scale for parallel observation selection.
    #[arg(long, default_value_t = 0.01)]
    pub c_o: f64,
    /// Search/rollout depth cap (defaults to the domain's).
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Planning budget per call, milliseconds.
    #[arg(long, default_value_t = 200)]
    pub budget_ms: u64,
    /// Search workers for the parallel-tree variants.
    #[arg(long, default_value_t = 8)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop a search once the root gap reaches this value.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon_target: f64,
    /// Deterministic trial cap (reproducible searches).
    #[arg(long)]
    pub max_trials: Option<u64>,
    /// Disable bound clamping at initialization values.
    #[arg(long, default_value_t = false)]
    pub no_clamp: bool,
    /// Record one structured trace line per trial.
    #[arg(long, default_value_t = false)]
    pub trace: bool,
}

impl SearchOpts {
    pub fn to_config<M: DespotModel>(&self, model: &M) -> SearchConfig {
        let spec = model.spec();
        SearchConfig {
            scenario_count: self.k,
            discount: self.discount.unwrap_or(spec.discount),
            xi: self.xi,
            uct_scale: self.c_a,
            virtual_loss_scale: self.c_o,
            max_depth: self.max_depth.unwrap_or(spec.max_rollout_depth),
            time_budget: Duration::from_millis(self.budget_ms),
            workers: self.workers,
            seed: self.seed,
            epsilon_target: self.epsilon_target,
            max_trials: self.max_trials,
            clamp_bounds: !self.no_clamp,
            record_root_bounds: false,
            trace: self.trace,
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// One planning call from the initial belief; prints tree statistics.
    Plan {
        #[command(flatten)]
        domain: DomainOpts,
        #[command(flatten)]
        search: SearchOpts,
        /// Planner variant: serial | parallel-tree-only | parallel-backend-only | hybrid.
        #[arg(long, default_value = "serial")]
        variant: String,
        /// Belief particles backing the initial belief.
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        /// Write a JSON dump of the search tree here.
        #[arg(long)]
        dump_tree: Option<PathBuf>,
    },
    /// One closed-loop episode.
    Episode {
        #[command(flatten)]
        domain: DomainOpts,
        #[command(flatten)]
        search: SearchOpts,
        #[arg(long, default_value = "serial")]
        variant: String,
        #[arg(long, default_value_t = 60)]
        step_limit: usize,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
    },
    /// N episodes per planner variant, with CSV/JSON results.
    Experiment {
        #[command(flatten)]
        domain: DomainOpts,
        #[command(flatten)]
        search: SearchOpts,
        /// Comma-separated planner variants.
        #[arg(long, default_value = "serial,hybrid", value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 60)]
        step_limit: usize,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        /// Output directory (default `despot-results`, overridden by
        /// DESPOT_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        episodes_in_parallel: bool,
    },
    /// Experiments across one swept parameter.
    Sweep {
        #[command(flatten)]
        domain: DomainOpts,
        #[command(flatten)]
        search: SearchOpts,
        /// Parameter to sweep: k | workers.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<u64>,
        #[arg(long, default_value = "serial,hybrid", value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 60)]
        step_limit: usize,
        #[arg(long, default_value_t = 10_000)]
        particles: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Ok(dir) = std::env::var("DESPOT_OUT_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from("despot-results")
}

fn parse_variants(names: &[String]) -> Result<Vec<PlannerVariant>, String> {
    names
        .iter()
        .map(|n| {
            PlannerVariant::parse(n).ok_or_else(|| {
                format!(
                    "unknown variant '{n}' (known: {})",
                    PlannerVariant::ALL.map(|v| v.name()).join(", ")
                )
            })
        })
        .collect()
}

fn print_report(report: &Report) {
    for v in &report.variants {
        let a = &v.aggregate;
        let speedup = a
            .speedup_vs_serial
            .map_or(String::new(), |s| format!(", speedup {s:.2}x"));
        let success = a
            .success_rate
            .map_or(String::new(), |s| format!(", success {:.0}%", s * 100.0));
        println!(
            "{}: return {:.3} +/- {:.3}, nodes {:.0} (norm {:.0}), depth {:.1}, \
             wall {:.1} ms{}{}{}",
            v.variant,
            a.mean_return,
            a.se_return,
            a.mean_node_count,
            a.mean_node_count_normalized,
            a.mean_search_depth,
            a.mean_plan_wall_ms,
            speedup,
            success,
            if a.aborted_episodes > 0 {
                format!(", {} aborted", a.aborted_episodes)
            } else {
                String::new()
            }
        );
    }
}

/// Runs the CLI. Returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn run_inner(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Plan { domain, search, variant, particles, dump_tree } => {
            let variant = PlannerVariant::parse(&variant).ok_or("unknown variant")?;
            let any = domain.build()?;
            with_domain!(any, model => {
                let config = search.to_config(&model);
                let belief = model.initial_belief(particles, config.seed);
                let outcome = plan(&model, &belief, &config, variant).map_err(|e| e.to_string())?;
                let s = &outcome.stats;
                println!(
                    "nodes {}, trials {}, expansions {}, max depth {}, wall {:.1} ms",
                    s.node_count,
                    s.trial_count,
                    s.expansion_count,
                    s.max_depth_reached,
                    s.wall_time.as_secs_f64() * 1e3
                );
                println!(
                    "root bounds [{:.4}, {:.4}], backend: {} requests, {:.1} ms busy",
                    s.root_bounds.lower,
                    s.root_bounds.upper,
                    s.backend.requests,
                    s.backend.busy_nanos as f64 / 1e6
                );
                if config.trace {
                    for t in &s.traces {
                        let path: Vec<String> = t
                            .path
                            .iter()
                            .map(|(n, a)| match a {
                                Some(a) => format!("{n}:a{a}"),
                                None => format!("{n}"),
                            })
                            .collect();
                        println!(
                            "trial worker={} path={} expanded={:?} us={}",
                            t.worker,
                            path.join(">"),
                            t.expanded,
                            t.nanos / 1_000
                        );
                    }
                }
                if let Some(path) = dump_tree {
                    let dump = outcome.tree.dump_json();
                    std::fs::write(&path, serde_json::to_string_pretty(&dump).unwrap())
                        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                    println!("tree dumped to {}", path.display());
                }
                Ok(0)
            })
        }
        Command::Episode { domain, search, variant, step_limit, particles } => {
            let variant = PlannerVariant::parse(&variant).ok_or("unknown variant")?;
            let any = domain.build()?;
            with_domain!(any, model => {
                let config = EpisodeConfig {
                    variant,
                    search: search.to_config(&model),
                    step_limit,
                    particle_count: particles,
                    seed: search.seed,
                };
                let record = run_episode(&model, &config);
                for (t, step) in record.steps.iter().enumerate() {
                    println!(
                        "step {t}: action {} reward {:.3} nodes {} depth {} wall {:.1} ms",
                        step.action, step.reward, step.node_count, step.max_depth, step.wall_ms
                    );
                }
                println!(
                    "return {:.4} (undiscounted {:.4}), steps {}, terminated {}{}",
                    record.discounted_return,
                    record.undiscounted_return,
                    record.steps.len(),
                    record.terminated,
                    record
                        .success
                        .map_or(String::new(), |s| format!(", success {s}"))
                );
                if let Some(reason) = &record.aborted {
                    eprintln!("aborted: {reason}");
                    return Ok(1);
                }
                Ok(0)
            })
        }
        Command::Experiment {
            domain,
            search,
            variants,
            episodes,
            step_limit,
            particles,
            out,
            episodes_in_parallel,
        } => {
            let variants = parse_variants(&variants)?;
            let any = domain.build()?;
            let config_text = domain.config_text();
            with_domain!(any, model => {
                let config = ExperimentConfig {
                    domain: domain.domain.clone(),
                    domain_config: config_text,
                    variants,
                    search: search.to_config(&model),
                    episodes,
                    step_limit,
                    particle_count: particles,
                    seed: search.seed,
                    episodes_in_parallel,
                };
                config.validate()?;
                let report = run_experiment(&model, &config);
                print_report(&report);
                let dir = out_dir(out);
                let (csv, json) = emit_results(&report, &dir).map_err(|e| e.to_string())?;
                println!("wrote {} and {}", csv.display(), json.display());
                let aborted: usize =
                    report.variants.iter().map(|v| v.aggregate.aborted_episodes).sum();
                Ok(if aborted > 0 { 1 } else { 0 })
            })
        }
        Command::Sweep {
            domain,
            search,
            param,
            values,
            variants,
            episodes,
            step_limit,
            particles,
            out,
        } => {
            if values.is_empty() {
                return Err("sweep needs at least one value".to_owned());
            }
            let variants = parse_variants(&variants)?;
            let any = domain.build()?;
            let config_text = domain.config_text();
            let dir = out_dir(out);
            let mut sweep_rows = String::from(
                "param,value,variant,mean_return,se_return,mean_node_count_normalized,\
                 mean_search_depth,speedup_vs_serial\n",
            );
            let mut aborted_total = 0usize;
            with_domain!(any, model => {
                for &value in &values {
                    let mut search_cfg = search.to_config(&model);
                    match param.as_str() {
                        "k" => search_cfg.scenario_count = value as usize,
                        "workers" => search_cfg.workers = value as usize,
                        other => return Err(format!("unknown sweep param '{other}' (k | workers)")),
                    }
                    let config = ExperimentConfig {
                        domain: domain.domain.clone(),
                        domain_config: config_text.clone(),
                        variants: variants.clone(),
                        search: search_cfg,
                        episodes,
                        step_limit,
                        particle_count: particles,
                        seed: search.seed,
                        episodes_in_parallel: false,
                    };
                    config.validate()?;
                    println!("--- {param} = {value} ---");
                    let report = run_experiment(&model, &config);
                    print_report(&report);
                    for v in &report.variants {
                        let a = &v.aggregate;
                        aborted_total += a.aborted_episodes;
                        sweep_rows.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            param,
                            value,
                            v.variant,
                            a.mean_return,
                            a.se_return,
                            a.mean_node_count_normalized,
                            a.mean_search_depth,
                            a.speedup_vs_serial.map_or(String::new(), |s| s.to_string()),
                        ));
                    }
                    emit_results(&report, &dir.join(format!("{param}-{value}")))
                        .map_err(|e| e.to_string())?;
                }
                std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                std::fs::write(dir.join("sweep.csv"), sweep_rows).map_err(|e| e.to_string())?;
                println!("sweep results under {}", dir.display());
                Ok(if aborted_total > 0 { 1 } else { 0 })
            })
        }
    }
}
