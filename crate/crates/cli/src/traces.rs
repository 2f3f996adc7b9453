//! Energy traces of individual solves, for plotting.

use std::path::PathBuf;

use anyhow::{ensure, Result};
use ired_core::infer::SolveTrace;
use ired_core::tasks::Difficulty;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::eval::solve_all;
use crate::layout::Layout;
use crate::report::{write_csv, write_json};
use crate::run::load_for_eval;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub instance: usize,
    pub level: usize,
    pub step: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Serialize)]
struct TraceFile<'a> {
    difficulty: &'a str,
    steps: usize,
    seed: u64,
    traces: &'a [SolveTrace],
}

pub fn flatten(traces: &[SolveTrace]) -> Vec<TracePoint> {
    let mut out = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        for l in &t.landscapes {
            for s in &l.steps {
                out.push(TracePoint {
                    instance: i,
                    level: l.level,
                    step: s.step,
                    energy_before: s.energy_before,
                    energy_after: s.energy_after,
                    accepted: s.accepted,
                });
            }
        }
    }
    out
}

/// Solve the first `count` instances of a split and write their traces.
pub fn cmd_plot_traces(
    cfg: &ExperimentConfig,
    seed: u64,
    difficulty: Difficulty,
    steps: usize,
    count: usize,
) -> Result<(PathBuf, PathBuf)> {
    let ck = load_for_eval(cfg, seed, None)?;
    let sched = cfg.schedule();
    ensure!(ck.schedule()? == sched, "checkpoint schedule does not match the config");
    let mut test = load_split(cfg, seed, Some(difficulty))?;
    test.truncate(count);
    let solved = solve_all(&ck.model()?, &test, &sched, &cfg.solve_config(steps, seed))?;
    let dir = Layout::new(cfg).traces();
    let stem = format!("{}-t{steps}-seed-{seed}", difficulty.name());
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    write_json(
        &json,
        &TraceFile {
            difficulty: difficulty.name(),
            steps,
            seed,
            traces: &solved.traces,
        },
    )?;
    write_csv(&csv, &flatten(&solved.traces))?;
    Ok((json, csv))
}
