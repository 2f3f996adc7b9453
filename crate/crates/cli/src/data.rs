//! Dataset generation and loading.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use ired_core::rng::{stream, tag};
use ired_core::tasks::io::{read_jsonl, write_jsonl};
use ired_core::tasks::{generate, Difficulty, ProblemInstance, SplitParams};
use rand::RngCore;

use crate::config::ExperimentConfig;
use crate::layout::Layout;

/// Generator seed for one split of one pipeline seed.
fn split_seed(seed: u64, split: u64) -> u64 {
    stream(seed, &[tag::DATA, split]).next_u64()
}

pub fn train_set(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ProblemInstance>> {
    Ok(generate(
        &cfg.split(Difficulty::Standard),
        Difficulty::Standard,
        cfg.data.train,
        split_seed(seed, 0),
    )?)
}

pub fn test_set(cfg: &ExperimentConfig, seed: u64, difficulty: Difficulty) -> Result<Vec<ProblemInstance>> {
    let split = match difficulty {
        Difficulty::Standard => 1,
        Difficulty::Harder => 2,
    };
    let params: SplitParams = cfg.split(difficulty);
    Ok(generate(&params, difficulty, cfg.count(difficulty), split_seed(seed, split))?)
}

pub fn write_dataset(path: &Path, instances: &[ProblemInstance]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_jsonl(BufWriter::new(f), instances).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<ProblemInstance>> {
    let f = fs::File::open(path).with_context(|| format!("opening dataset {} (run `gen` first)", path.display()))?;
    Ok(read_jsonl(BufReader::new(f)).with_context(|| format!("in dataset {}", path.display()))?)
}

/// Write the training set and both test splits for every seed. Rerunning
/// with the same config rewrites byte-identical files.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(cfg);
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let train = train_set(cfg, seed)?;
        let path = layout.train_file(seed);
        write_dataset(&path, &train)?;
        written.push(path);
        for d in [Difficulty::Standard, Difficulty::Harder] {
            let path = layout.split_file(seed, d);
            write_dataset(&path, &test_set(cfg, seed, d)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Load a split written by [`cmd_gen`] and check it against the config.
pub fn load_split(cfg: &ExperimentConfig, seed: u64, difficulty: Option<Difficulty>) -> Result<Vec<ProblemInstance>> {
    let layout = Layout::new(cfg);
    let path = match difficulty {
        None => layout.train_file(seed),
        Some(d) => layout.split_file(seed, d),
    };
    let data = read_dataset(&path)?;
    let kind = cfg.split(difficulty.unwrap_or(Difficulty::Standard)).kind;
    ensure!(
        data.iter().all(|i| i.kind == kind),
        "{} holds instances of a different task than {:?}",
        path.display(),
        kind
    );
    Ok(data)
}
