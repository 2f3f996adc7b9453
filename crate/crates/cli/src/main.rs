use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ired_core::tasks::Difficulty;
use ired_cli::{ablate, data, eval, failure, run, traces, ExperimentConfig};
use serde_json::json;

/// Iterative reasoning with annealed energy landscapes.
#[derive(Parser)]
#[command(name = "ired", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Overrides applied on top of the config file.
#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(short, long, global = true, default_value = "ired.toml")]
    config: PathBuf,
    /// Output directory; relative paths resolve against $IRED_OUTPUT_ROOT.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Comma-separated pipeline seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    contrastive_weight: Option<f64>,
    /// Comma-separated steps-per-landscape grid.
    #[arg(long, global = true, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Standard,
    Harder,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write training and test splits for every seed.
    Gen,
    /// Train one seed (or all of them).
    Train {
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long, requires = "seed")]
        resume: Option<PathBuf>,
    },
    /// Solve both test splits over the steps grid and write the report.
    Eval {
        /// Evaluate this checkpoint instead of the run's final one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the four-row ablation ladder.
    Ablate,
    /// Write per-step energy traces for a few solves.
    PlotTraces {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "standard")]
        split: Split,
        /// Steps per landscape; defaults to the largest grid entry.
        #[arg(long = "trace-steps")]
        trace_steps: Option<usize>,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(d) = &c.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(v) = c.iterations {
        cfg.train.iterations = v;
    }
    if let Some(v) = c.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = c.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = c.contrastive_weight {
        cfg.train.contrastive_weight = v;
    }
    if let Some(s) = &c.steps {
        cfg.solve.steps = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let cfg = load(&cli.common)?;
    Ok(match cli.cmd {
        Cmd::Gen => json!({ "written": data::cmd_gen(&cfg)? }),
        Cmd::Train { seed, resume } => {
            let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
            let mut out = Vec::new();
            for s in seeds {
                let o = run::cmd_train(&cfg, s, resume.as_deref())?;
                out.push(json!({ "seed": s, "checkpoint": o.checkpoint, "iterations_run": o.iterations_run }));
            }
            json!({ "trained": out })
        }
        Cmd::Eval { checkpoint } => {
            let r = eval::cmd_eval(&cfg, checkpoint.as_deref(), None)?;
            json!({ "report": cfg.output_path().join("reports/eval.json"), "aggregates": r.aggregates })
        }
        Cmd::Ablate => {
            let r = ablate::cmd_ablate(&cfg)?;
            json!({ "report": cfg.output_path().join("reports/ablation.json"), "aggregates": r.aggregates })
        }
        Cmd::PlotTraces {
            seed,
            split,
            trace_steps,
            count,
        } => {
            let d = match split {
                Split::Standard => Difficulty::Standard,
                Split::Harder => Difficulty::Harder,
            };
            let steps = trace_steps.unwrap_or_else(|| *cfg.solve.steps.iter().max().expect("validated"));
            let (j, c) = traces::cmd_plot_traces(&cfg, seed, d, steps, count)?;
            json!({ "json": j, "csv": c })
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&failure::usage_json(e.to_string())).expect("serializes"));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&failure::to_json(&e)).expect("serializes"));
            ExitCode::FAILURE
        }
    }
}
