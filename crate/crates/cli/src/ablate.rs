//! The four-row ablation ladder.
//!
//! | row | solver | steps per landscape | training loss |
//! |---|---|---|---|
//! | `noisy` | reverse diffusion | one update per level | denoising |
//! | `gd_t1` | gradient descent | 1 | denoising |
//! | `gd_refine` | gradient descent | max of the grid | denoising |
//! | `full` | gradient descent | max of the grid | denoising + contrastive |
//!
//! Rows 1 to 3 share one denoising-only model per seed; every row sees the
//! same seeds and test sets.

use anyhow::{ensure, Result};

use crate::config::{AblationFlags, ExperimentConfig};
use crate::data::load_split;
use crate::eval::{metric_name, score, solve_all, DIFFICULTIES};
use crate::layout::Layout;
use crate::report::{mean_std, report_paths, write_csv, write_json, AblationReport, AblationRow, Aggregate, TimingRow};
use crate::run::ensure_trained;

pub const LADDER: [(&str, AblationFlags); 4] = [
    (
        "noisy",
        AblationFlags {
            gradient_descent: false,
            refinement: true,
            contrastive: false,
        },
    ),
    (
        "gd_t1",
        AblationFlags {
            gradient_descent: true,
            refinement: false,
            contrastive: false,
        },
    ),
    (
        "gd_refine",
        AblationFlags {
            gradient_descent: true,
            refinement: true,
            contrastive: false,
        },
    ),
    (
        "full",
        AblationFlags {
            gradient_descent: true,
            refinement: true,
            contrastive: true,
        },
    ),
];

/// The config for one ladder row: `base` with only the ablation flags
/// replaced.
pub fn row_config(base: &ExperimentConfig, flags: AblationFlags) -> ExperimentConfig {
    let mut c = base.clone();
    c.ablation = flags;
    c
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<AblationReport> {
    let steps = *cfg.solve.steps.iter().max().expect("validated non-empty");
    ensure!(steps > 1, "the ablation needs a steps grid entry above 1 for the refinement rows");
    let sched = cfg.schedule();
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &seed in &cfg.seeds {
        for (name, flags) in LADDER {
            let rc = row_config(cfg, flags);
            let model = ensure_trained(&rc, seed)?.model()?;
            let solve = rc.solve_config(steps, seed);
            for d in DIFFICULTIES {
                let test = load_split(&rc, seed, Some(d))?;
                let solved = solve_all(&model, &test, &sched, &solve)?;
                rows.push(AblationRow {
                    row: name.into(),
                    config_hash: rc.hash(),
                    noisy_mode: solve.noisy_mode,
                    steps: solve.steps,
                    contrastive: flags.contrastive,
                    difficulty: d.name().into(),
                    seed,
                    metric: score(&solved.predictions, &test)?.metric,
                });
                timing.push(TimingRow {
                    group: name.into(),
                    difficulty: d.name().into(),
                    steps: solve.steps,
                    seed,
                    seconds: solved.seconds,
                    seconds_per_solve: solved.seconds / test.len().max(1) as f64,
                });
            }
        }
    }
    let mut aggregates = Vec::new();
    for (name, flags) in LADDER {
        for d in DIFFICULTIES {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.row == name && r.difficulty == d.name())
                .map(|r| r.metric)
                .collect();
            let (mean, std) = mean_std(&v);
            aggregates.push(Aggregate {
                group: name.into(),
                difficulty: d.name().into(),
                steps: row_config(cfg, flags).effective_steps(steps),
                mean,
                std,
                seeds: v.len(),
            });
        }
    }
    let report = AblationReport {
        name: cfg.name.clone(),
        task: cfg.task.name().into(),
        metric: metric_name(&cfg.task).into(),
        higher_is_better: cfg.task.higher_is_better(),
        rows,
        aggregates,
    };
    let dir = Layout::new(cfg).reports();
    let (json, csv, summary) = report_paths(&dir, "ablation");
    write_json(&json, &report)?;
    write_csv(&csv, &report.rows)?;
    write_csv(&summary, &report.aggregates)?;
    write_json(&dir.join("ablation-timing.json"), &timing)?;
    Ok(report)
}

/// Whether row `full` is at least as good as every other row on
/// `difficulty`, allowing ties within one standard deviation of either side.
pub fn full_dominates(report: &AblationReport, difficulty: &str) -> bool {
    let get = |row: &str| {
        report
            .aggregates
            .iter()
            .find(|a| a.group == row && a.difficulty == difficulty)
            .map(|a| (a.mean, a.std))
    };
    let Some((full, full_std)) = get("full") else {
        return false;
    };
    LADDER.iter().filter(|(n, _)| *n != "full").all(|(n, _)| {
        let Some((m, s)) = get(n) else { return false };
        let tol = s.max(full_std);
        if report.higher_is_better {
            full >= m - tol
        } else {
            full <= m + tol
        }
    })
}
