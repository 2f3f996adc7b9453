//! Experiment configuration, read from TOML and checked at load.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ired_core::infer::SolveConfig;
use ired_core::model::{Architecture, ModelSpec};
use ired_core::tasks::{Difficulty, SplitParams, TaskKind};
use ired_core::train::{NegativeSpec, TrainConfig};
use ired_core::NoiseSchedule;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the directory that relative output paths
/// resolve against.
pub const OUTPUT_ROOT_ENV: &str = "IRED_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Relative paths resolve against `$IRED_OUTPUT_ROOT` (or the working
    /// directory when unset).
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub task: TaskKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub data: DataConfig,
    pub train: TrainSection,
    pub solve: SolveSection,
    #[serde(default)]
    pub ablation: AblationFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub width: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub levels: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { levels: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: usize,
    pub test: usize,
    pub harder: usize,
    /// Generator overrides; desk defaults otherwise.
    #[serde(default)]
    pub standard_split: Option<SplitParams>,
    #[serde(default)]
    pub harder_split: Option<SplitParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch: usize,
    pub lr: f64,
    pub iterations: usize,
    #[serde(default = "one")]
    pub contrastive_weight: f64,
    #[serde(default)]
    pub negative: NegativeSpec,
    /// Write an intermediate checkpoint every this many iterations; 0 keeps
    /// only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Steps-per-landscape grid evaluated by `eval`.
    pub steps: Vec<usize>,
    #[serde(default = "one")]
    pub lambda0: f64,
    #[serde(default = "yes")]
    pub acceptance_check: bool,
    #[serde(default)]
    pub polish: bool,
}

fn yes() -> bool {
    true
}

/// Which mechanisms are switched on. `ablate` sweeps these; `train` and
/// `eval` honour them as given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    /// Off: replace landscape descent with the noisy reverse process.
    #[serde(default = "yes")]
    pub gradient_descent: bool,
    /// Off: one step per landscape regardless of the steps grid.
    #[serde(default = "yes")]
    pub refinement: bool,
    /// Off: train with the denoising loss only.
    #[serde(default = "yes")]
    pub contrastive: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            gradient_descent: true,
            refinement: true,
            contrastive: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.name.is_empty(), "name must not be empty");
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        ensure!(seen.len() == self.seeds.len(), "seeds must be distinct");
        self.task.validate()?;
        self.model_spec().validate()?;
        NoiseSchedule::cosine(self.schedule.levels)?;
        self.train_config(self.seeds[0]).validate()?;
        ensure!(self.data.train > 0, "the training set must not be empty");
        for (d, split) in [
            (Difficulty::Standard, &self.data.standard_split),
            (Difficulty::Harder, &self.data.harder_split),
        ] {
            if let Some(p) = split {
                p.kind.validate()?;
                let same_family = p.kind.name() == self.task.name() && p.kind.is_continuous() == self.task.is_continuous();
                ensure!(same_family, "{} split must be a {} task", d.name(), self.task.name());
            }
        }
        ensure!(!self.solve.steps.is_empty(), "the steps grid must not be empty");
        ensure!(
            self.solve.lambda0 > 0.0 && self.solve.lambda0.is_finite(),
            "lambda0 must be positive"
        );
        let harder = self.split(Difficulty::Harder);
        if harder.kind != self.task {
            let generalizes = matches!(
                self.model.arch,
                Architecture::EdgeRelationalEnergy | Architecture::PlanRelationalEnergy
            );
            if !generalizes {
                bail!("the harder split changes the task size, which {} cannot evaluate", self.model.arch.name());
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            arch: self.model.arch,
            width: self.model.width,
            depth: self.model.depth,
            x_dim: self.task.x_dim(),
            y_dim: self.task.y_dim(),
            levels: self.schedule.levels,
        }
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::cosine(self.schedule.levels).expect("validated")
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch: t.batch,
            lr: t.lr,
            iterations: t.iterations,
            contrastive_weight: if self.ablation.contrastive { t.contrastive_weight } else { 0.0 },
            negative: t.negative.clone(),
            seed,
            levels: self.schedule.levels,
        }
    }

    /// Steps actually used for a grid entry once the refinement flag applies.
    pub fn effective_steps(&self, steps: usize) -> usize {
        if self.ablation.refinement {
            steps
        } else {
            1
        }
    }

    pub fn solve_config(&self, steps: usize, seed: u64) -> SolveConfig {
        let mut c = SolveConfig::scaled(&self.schedule(), self.solve.lambda0, self.effective_steps(steps), seed);
        c.acceptance_check = self.solve.acceptance_check;
        c.polish = self.solve.polish;
        c.noisy_mode = !self.ablation.gradient_descent;
        c
    }

    pub fn split(&self, difficulty: Difficulty) -> SplitParams {
        let o = match difficulty {
            Difficulty::Standard => self.data.standard_split,
            Difficulty::Harder => self.data.harder_split,
        };
        o.unwrap_or_else(|| SplitParams::desk(self.task, difficulty))
    }

    pub fn count(&self, difficulty: Difficulty) -> usize {
        match difficulty {
            Difficulty::Standard => self.data.test,
            Difficulty::Harder => self.data.harder,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&json))
    }

    /// Hash of the fields that determine training: everything except the
    /// evaluation grid, iteration budget and output location. A checkpoint
    /// can resume or be evaluated only under a matching training hash.
    pub fn training_hash(&self) -> String {
        let mut c = self.clone();
        c.name.clear();
        c.seeds.clear();
        c.solve = SolveSection {
            steps: vec![],
            lambda0: 1.0,
            acceptance_check: true,
            polish: false,
        };
        c.ablation.gradient_descent = true;
        c.ablation.refinement = true;
        c.train.iterations = 0;
        c.train.checkpoint_every = 0;
        c.data.test = 0;
        c.data.harder = 0;
        c.data.harder_split = None;
        c.hash()
    }

    /// Output directory after resolving against the output root.
    pub fn output_path(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ADDITION: &str = r#"
name = "addition"
output_dir = "addition"
seeds = [0, 1]

[task]
task = "addition"
n = 4

[model]
arch = "mlp_energy"
width = 16
depth = 2

[data]
train = 64
test = 8
harder = 8

[train]
batch = 8
lr = 1e-3
iterations = 4

[solve]
steps = [1, 3]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(ADDITION).unwrap();
        assert_eq!(c.schedule.levels, 10);
        assert_eq!(c.train.contrastive_weight, 1.0);
        assert_eq!(c.ablation, AblationFlags::default());
        assert_eq!(c.model_spec().x_dim, 32);
        let back = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::parse(&format!("{ADDITION}\nextra = 1\n")).is_err());
        assert!(ExperimentConfig::parse(&ADDITION.replace("seeds = [0, 1]", "seeds = []")).is_err());
        assert!(ExperimentConfig::parse(&ADDITION.replace("seeds = [0, 1]", "seeds = [3, 3]")).is_err());
        assert!(ExperimentConfig::parse(&ADDITION.replace("batch = 8", "batch = 0")).is_err());
        assert!(ExperimentConfig::parse(&ADDITION.replace("steps = [1, 3]", "steps = []")).is_err());
        assert!(ExperimentConfig::parse(&ADDITION.replace("width = 16", "width = 0")).is_err());
    }

    #[test]
    fn flags_shape_the_derived_configs() {
        let mut c = ExperimentConfig::parse(ADDITION).unwrap();
        assert_eq!(c.solve_config(3, 0).steps, 3);
        c.ablation.refinement = false;
        assert_eq!(c.solve_config(3, 0).steps, 1);
        c.ablation.gradient_descent = false;
        assert!(c.solve_config(3, 0).noisy_mode);
        c.ablation.contrastive = false;
        assert_eq!(c.train_config(0).contrastive_weight, 0.0);
    }

    #[test]
    fn training_hash_ignores_evaluation_fields() {
        let a = ExperimentConfig::parse(ADDITION).unwrap();
        let mut b = a.clone();
        b.solve.steps = vec![40];
        b.ablation.refinement = false;
        b.train.iterations = 99;
        assert_eq!(a.training_hash(), b.training_hash());
        assert_ne!(a.hash(), b.hash());
        b.train.lr = 2e-3;
        assert_ne!(a.training_hash(), b.training_hash());
        b = a.clone();
        b.ablation.contrastive = false;
        assert_ne!(a.training_hash(), b.training_hash());
    }
}
