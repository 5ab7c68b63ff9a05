//! Result emission: per-episode CSV plus a JSON summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::experiment::Report;

// Wall-clock timing stays out of the CSV so seeded serial runs emit
// byte-identical files; timing aggregates live in the JSON summary.
pub const CSV_HEADER: &str = "variant,episode,seed,steps,discounted_return,success,aborted,\
mean_node_count,mean_node_count_normalized,mean_trial_count,mean_search_depth";

/// Writes `episodes.csv` (one row per episode, stable column order) and
/// `summary.json` under `dir`. Returns the two paths.
pub fn emit_results(report: &Report, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("episodes.csv");
    let json_path = dir.join("summary.json");

    let mut csv = String::new();
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for variant in &report.variants {
        for e in &variant.episodes {
            let success = e.success.map_or(String::new(), |s| s.to_string());
            let aborted = e.aborted.as_deref().unwrap_or("").replace(',', ";");
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                variant.variant,
                e.episode,
                e.seed,
                e.steps,
                fmt_f64(e.discounted_return),
                success,
                aborted,
                fmt_f64(e.mean_node_count),
                fmt_f64(e.mean_node_count_normalized),
                fmt_f64(e.mean_trial_count),
                fmt_f64(e.mean_search_depth),
            ));
        }
    }
    let mut csv_file = fs::File::create(&csv_path)?;
    csv_file.write_all(csv.as_bytes())?;

    let json = serde_json::to_string_pretty(report)?;
    let mut json_file = fs::File::create(&json_path)?;
    json_file.write_all(json.as_bytes())?;
    Ok((csv_path, json_path))
}

/// Full-precision float formatting so reloading a CSV reproduces the value.
fn fmt_f64(x: f64) -> String {
    let mut s = format!("{x:?}");
    if s.ends_with(".0") {
        s.truncate(s.len() - 2);
    }
    s
}

/// Reads the discounted-return column back out of an emitted CSV.
pub fn csv_returns(path: &Path) -> std::io::Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() >= 5 {
            if let Ok(v) = fields[4].parse::<f64>() {
                rows.push((fields[0].to_owned(), v));
            }
        }
    }
    Ok(rows)
}
