//! Training runs with loss logs, periodic checkpoints and exact resume.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use ired_core::train::{LossRecord, Trainer};
use ired_core::{EnergyModel, Tensor};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::data::load_split;
use crate::layout::Layout;

/// Training aborted on a non-finite value.
#[derive(Debug)]
pub struct Diverged {
    pub iteration: usize,
    pub last_checkpoint: Option<PathBuf>,
}

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training diverged at iteration {}", self.iteration)?;
        match &self.last_checkpoint {
            Some(p) => write!(f, "; last good checkpoint {}", p.display()),
            None => write!(f, "; no checkpoint was written"),
        }
    }
}

impl std::error::Error for Diverged {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub iterations_run: usize,
    pub trainer: Trainer,
}

const LOSS_HEADER: &str = "iteration,mse,contrast";

fn read_losses(path: &Path, upto: usize) -> Result<Vec<LossRecord>> {
    let f = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && upto == 0 => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("opening {}", path.display())),
    };
    let mut rdr = csv::Reader::from_reader(BufReader::new(f));
    let mut out = Vec::new();
    for rec in rdr.deserialize::<LossRecord>() {
        let rec = rec.with_context(|| format!("in {}", path.display()))?;
        if rec.iteration < upto {
            out.push(rec);
        }
    }
    ensure!(
        out.len() == upto && out.iter().enumerate().all(|(i, r)| r.iteration == i),
        "{} does not cover the first {upto} iterations",
        path.display()
    );
    Ok(out)
}

fn write_losses(path: &Path, rows: &[LossRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{LOSS_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{:?},{:?}", r.iteration, r.mse, r.contrast)?;
    }
    w.flush()?;
    Ok(())
}

pub fn count_loss_rows(path: &Path) -> Result<usize> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f).lines().count().saturating_sub(1))
}

fn pairs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<(Tensor, Tensor)>> {
    Ok(load_split(cfg, seed, None)?.into_iter().map(|i| (i.x, i.y_star)).collect())
}

/// Train one seed. With `resume`, continue from that checkpoint after
/// checking that it was produced under the same training settings.
pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, resume: Option<&Path>) -> Result<TrainOutcome> {
    let layout = Layout::new(cfg);
    let dir = layout.run_dir(cfg, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let sched = cfg.schedule();
    let hash = cfg.training_hash();
    let tcfg = cfg.train_config(seed);
    let data = pairs(cfg, seed)?;

    let (mut trainer, mut last_ckpt) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            ensure!(
                ck.header.training_hash == hash,
                "checkpoint {} was trained under a different configuration (hash {}, expected {})",
                path.display(),
                ck.header.training_hash,
                hash
            );
            ensure!(ck.header.seed == seed, "checkpoint seed {} does not match {seed}", ck.header.seed);
            ensure!(ck.schedule()? == sched, "checkpoint schedule does not match the config");
            ensure!(
                ck.header.iteration <= tcfg.iterations,
                "checkpoint is at iteration {}, past the configured {}",
                ck.header.iteration,
                tcfg.iterations
            );
            let mut t = ck.trainer()?;
            t.history = read_losses(&layout.loss_csv(cfg, seed), t.iteration)?;
            (t, Some(path.to_path_buf()))
        }
        None => (Trainer::new(EnergyModel::build(cfg.model_spec(), seed)?), None),
    };

    let start = trainer.iteration;
    let every = cfg.train.checkpoint_every;
    let loss_path = layout.loss_csv(cfg, seed);
    let result = trainer.run(&data, &tcfg, cfg.task.output(), &sched, |t| {
        if every > 0 && t.iteration % every == 0 && t.iteration < tcfg.iterations {
            let p = layout.checkpoint_at(cfg, seed, t.iteration);
            Checkpoint::from_trainer(t, &sched, seed, &hash).save(&p).map_err(core_config)?;
            write_losses(&loss_path, &t.history).map_err(core_config)?;
            last_ckpt = Some(p);
        }
        Ok(true)
    });
    match result {
        Ok(()) => {}
        Err(ired_core::Error::Diverged { iteration, .. }) => {
            write_losses(&loss_path, &trainer.history)?;
            return Err(anyhow::Error::new(Diverged {
                iteration,
                last_checkpoint: last_ckpt,
            }));
        }
        Err(e) => return Err(e.into()),
    }
    write_losses(&loss_path, &trainer.history)?;
    let fin = layout.final_checkpoint(cfg, seed);
    Checkpoint::from_trainer(&trainer, &sched, seed, &hash).save(&fin)?;
    Ok(TrainOutcome {
        checkpoint: fin,
        iterations_run: trainer.iteration - start,
        trainer,
    })
}

fn core_config(e: anyhow::Error) -> ired_core::Error {
    ired_core::Error::Config(format!("{e:#}"))
}

/// Load the final checkpoint for `seed`, training it first if it is missing
/// or stops short of the configured iterations.
pub fn ensure_trained(cfg: &ExperimentConfig, seed: u64) -> Result<Checkpoint> {
    let path = Layout::new(cfg).final_checkpoint(cfg, seed);
    if path.exists() {
        let ck = Checkpoint::load(&path)?;
        if ck.header.training_hash == cfg.training_hash() && ck.header.iteration == cfg.train.iterations {
            return Ok(ck);
        }
        if ck.header.training_hash == cfg.training_hash() && ck.header.iteration < cfg.train.iterations {
            cmd_train(cfg, seed, Some(&path))?;
            return Checkpoint::load(&path);
        }
    }
    cmd_train(cfg, seed, None)?;
    Checkpoint::load(&path)
}

/// Checkpoint for evaluation: `explicit` if given, else the final one of
/// the run matching `cfg`.
pub fn load_for_eval(cfg: &ExperimentConfig, seed: u64, explicit: Option<&Path>) -> Result<Checkpoint> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => Layout::new(cfg).final_checkpoint(cfg, seed),
    };
    let ck = Checkpoint::load(&path).with_context(|| format!("no checkpoint for seed {seed} (run `train` first)"))?;
    ensure!(
        ck.header.spec == cfg.model_spec(),
        "checkpoint model {:?} is incompatible with the configured {:?}",
        ck.header.spec,
        cfg.model_spec()
    );
    Ok(ck)
}
