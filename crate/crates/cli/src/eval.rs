//! Solving test splits and scoring them.

use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Result};
use ired_core::infer::{anneal_solve_batch_sized, SolveConfig, SolveTrace};
use ired_core::tasks::graph::random_neighbor_baseline;
use ired_core::tasks::{exact_match, metric, Difficulty, ProblemInstance, TaskKind};
use ired_core::{EnergyModel, NoiseSchedule, Tensor};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::layout::Layout;
use crate::report::{mean_std, report_paths, write_csv, write_json, Aggregate, EvalReport, EvalRow, TimingRow};
use crate::run::load_for_eval;

/// Instances per solver batch. Chunk boundaries depend only on this, so
/// results do not depend on the thread count.
pub const CHUNK: usize = 50;

pub struct Solved {
    pub predictions: Vec<Tensor>,
    pub traces: Vec<SolveTrace>,
    pub seconds: f64,
}

/// Solve every instance; instance `i` draws its initial noise from id `i`.
pub fn solve_all(model: &EnergyModel, instances: &[ProblemInstance], sched: &NoiseSchedule, cfg: &SolveConfig) -> Result<Solved> {
    let t0 = Instant::now();
    let chunks: Vec<(usize, &[ProblemInstance])> = instances.chunks(CHUNK).enumerate().collect();
    let results: Vec<ired_core::Result<(Tensor, Vec<SolveTrace>)>> = chunks
        .par_iter()
        .map(|&(c, part)| {
            let xs = Tensor::stack(&part.iter().map(|i| i.x.clone()).collect::<Vec<_>>())?;
            let ids: Vec<u64> = (0..part.len()).map(|j| (c * CHUNK + j) as u64).collect();
            anneal_solve_batch_sized(model, &xs, part[0].kind.y_dim(), sched, cfg, &ids)
        })
        .collect();
    let mut predictions = Vec::with_capacity(instances.len());
    let mut traces = Vec::with_capacity(instances.len());
    for r in results {
        let (ys, tr) = r?;
        predictions.extend(ys.unstack());
        traces.extend(tr);
    }
    Ok(Solved {
        predictions,
        traces,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub struct Scores {
    pub metric: f64,
    pub exact_match: Option<f64>,
}

pub fn score(predictions: &[Tensor], instances: &[ProblemInstance]) -> Result<Scores> {
    ensure!(predictions.len() == instances.len(), "prediction count mismatch");
    if instances.is_empty() {
        return Ok(Scores {
            metric: f64::NAN,
            exact_match: None,
        });
    }
    let n = instances.len() as f64;
    let mut total = 0.0;
    let mut exact: Option<f64> = None;
    for (y, inst) in predictions.iter().zip(instances) {
        total += metric(y, inst)?;
        if let Some(e) = exact_match(y, inst) {
            *exact.get_or_insert(0.0) += e;
        }
    }
    Ok(Scores {
        metric: total / n,
        exact_match: exact.map(|e| e / n),
    })
}

pub fn baseline(instances: &[ProblemInstance]) -> Result<Option<f64>> {
    match instances.first().map(|i| i.kind) {
        Some(TaskKind::ShortestPath { .. }) => {
            let total: f64 = instances.iter().map(random_neighbor_baseline).sum::<ired_core::Result<f64>>()?;
            Ok(Some(total / instances.len() as f64))
        }
        _ => Ok(None),
    }
}

pub fn metric_name(task: &TaskKind) -> &'static str {
    match task {
        TaskKind::Addition { .. } | TaskKind::Completion { .. } | TaskKind::Inverse { .. } => "mse",
        TaskKind::Sudoku { .. } => "board_accuracy",
        TaskKind::Connectivity { .. } => "entry_accuracy",
        TaskKind::ShortestPath { .. } => "first_action_success",
    }
}

pub const DIFFICULTIES: [Difficulty; 2] = [Difficulty::Standard, Difficulty::Harder];

/// Evaluate every seed's checkpoint on both splits over the steps grid.
/// `checkpoint` overrides the run's final checkpoint (single-seed configs
/// only); `steps` overrides the configured grid.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>, steps: Option<&[usize]>) -> Result<EvalReport> {
    ensure!(
        checkpoint.is_none() || cfg.seeds.len() == 1,
        "an explicit checkpoint needs exactly one seed"
    );
    let grid = steps.unwrap_or(&cfg.solve.steps);
    ensure!(!grid.is_empty(), "the steps grid must not be empty");
    let sched = cfg.schedule();
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &seed in &cfg.seeds {
        let ck = load_for_eval(cfg, seed, checkpoint)?;
        ensure!(ck.schedule()? == sched, "checkpoint schedule does not match the config");
        let model = ck.model()?;
        for d in DIFFICULTIES {
            let test = load_split(cfg, seed, Some(d))?;
            let base = baseline(&test)?;
            for &t in grid {
                let solved = solve_all(&model, &test, &sched, &cfg.solve_config(t, seed))?;
                let s = score(&solved.predictions, &test)?;
                rows.push(EvalRow {
                    difficulty: d.name().into(),
                    steps: t,
                    seed,
                    metric: s.metric,
                    exact_match: s.exact_match,
                    baseline: base,
                    instances: test.len(),
                });
                timing.push(TimingRow {
                    group: "eval".into(),
                    difficulty: d.name().into(),
                    steps: t,
                    seed,
                    seconds: solved.seconds,
                    seconds_per_solve: solved.seconds / test.len().max(1) as f64,
                });
            }
        }
    }
    let mut aggregates = Vec::new();
    for d in DIFFICULTIES {
        for &t in grid {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.difficulty == d.name() && r.steps == t)
                .map(|r| r.metric)
                .collect();
            let (mean, std) = mean_std(&v);
            aggregates.push(Aggregate {
                group: format!("{}-t{t}", d.name()),
                difficulty: d.name().into(),
                steps: t,
                mean,
                std,
                seeds: v.len(),
            });
        }
    }
    let report = EvalReport {
        name: cfg.name.clone(),
        task: cfg.task.name().into(),
        metric: metric_name(&cfg.task).into(),
        higher_is_better: cfg.task.higher_is_better(),
        config_hash: cfg.hash(),
        training_hash: cfg.training_hash(),
        rows,
        aggregates,
    };
    let dir = Layout::new(cfg).reports();
    let (json, csv, summary) = report_paths(&dir, "eval");
    write_json(&json, &report)?;
    write_csv(&csv, &report.rows)?;
    write_csv(&summary, &report.aggregates)?;
    write_json(&dir.join("eval-timing.json"), &timing)?;
    Ok(report)
}
