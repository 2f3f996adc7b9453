//! Evaluation and ablation reports, written as JSON and CSV.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub difficulty: String,
    pub steps: usize,
    pub seed: u64,
    pub metric: f64,
    /// Per-graph exact match on connectivity.
    pub exact_match: Option<f64>,
    /// Random out-neighbor success on shortest path.
    pub baseline: Option<f64>,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Grouping key, e.g. `harder` with `steps` 40, or an ablation row name.
    pub group: String,
    pub difficulty: String,
    pub steps: usize,
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub task: String,
    pub metric: String,
    pub higher_is_better: bool,
    pub config_hash: String,
    pub training_hash: String,
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub row: String,
    pub config_hash: String,
    pub noisy_mode: bool,
    pub steps: usize,
    pub contrastive: bool,
    pub difficulty: String,
    pub seed: u64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub name: String,
    pub task: String,
    pub metric: String,
    pub higher_is_better: bool,
    pub rows: Vec<AblationRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Wall-clock measurements, kept apart from the reports so those stay
/// byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub group: String,
    pub difficulty: String,
    pub steps: usize,
    pub seed: u64,
    pub seconds: f64,
    pub seconds_per_solve: f64,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Paths of a JSON report, its CSV rows and CSV aggregates.
pub fn report_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{stem}.json")),
        dir.join(format!("{stem}.csv")),
        dir.join(format!("{stem}-summary.csv")),
    )
}
