//! Where each artifact lives under an experiment's output directory.
//!
//! ```text
//! data/seed-<s>/{train,standard,harder}.jsonl
//! runs/<label>-<hash>/seed-<s>/{loss.csv, final.ckpt, ckpt-<iteration>.ckpt}
//! reports/{eval,ablation}.{json,csv} and *-timing.json
//! traces/<difficulty>-t<T>-seed-<s>.{json,csv}
//! ```
//!
//! `<hash>` is the first 12 hex digits of the training hash, so runs that
//! differ in anything that affects training never share a directory.

use std::path::PathBuf;

use ired_core::tasks::Difficulty;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self { root: cfg.output_path() }
    }

    pub fn data_dir(&self, seed: u64) -> PathBuf {
        self.root.join("data").join(format!("seed-{seed}"))
    }

    pub fn train_file(&self, seed: u64) -> PathBuf {
        self.data_dir(seed).join("train.jsonl")
    }

    pub fn split_file(&self, seed: u64, difficulty: Difficulty) -> PathBuf {
        self.data_dir(seed).join(format!("{}.jsonl", difficulty.name()))
    }

    pub fn run_dir(&self, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
        let label = if cfg.ablation.contrastive { "contrastive" } else { "denoise" };
        let hash = cfg.training_hash();
        self.root
            .join("runs")
            .join(format!("{label}-{}", &hash[..12]))
            .join(format!("seed-{seed}"))
    }

    pub fn final_checkpoint(&self, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
        self.run_dir(cfg, seed).join("final.ckpt")
    }

    pub fn checkpoint_at(&self, cfg: &ExperimentConfig, seed: u64, iteration: usize) -> PathBuf {
        self.run_dir(cfg, seed).join(format!("ckpt-{iteration:08}.ckpt"))
    }

    pub fn loss_csv(&self, cfg: &ExperimentConfig, seed: u64) -> PathBuf {
        self.run_dir(cfg, seed).join("loss.csv")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }
}
