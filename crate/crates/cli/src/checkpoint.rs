//! Binary checkpoints: a JSON header followed by named `f64` arrays.
//!
//! Layout: the magic `IREDCKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the UTF-8 JSON header, then every
//! array's values as raw little-endian `f64` in header order. Arrays are
//! named `param/<name>`, `adam.m/<name>`, `adam.v/<name>` and
//! `schedule/alpha_bar`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use ired_core::model::{EnergyModel, ModelSpec, ParamSet};
use ired_core::train::{AdamState, Trainer};
use ired_core::{NoiseSchedule, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;

pub const MAGIC: &[u8; 8] = b"IREDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub iteration: usize,
    pub adam_step: u64,
    pub seed: u64,
    pub training_hash: String,
    /// Digest of the generator keys that drive the next iteration.
    pub rng_digest: String,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub arrays: Vec<(String, Tensor)>,
}

/// The random streams are pure functions of `(seed, tag, iteration)`, so
/// these two numbers are the whole generator state.
pub fn rng_digest(seed: u64, iteration: usize) -> String {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((iteration as u64).to_le_bytes());
    hex(&h.finalize())
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer, sched: &NoiseSchedule, seed: u64, training_hash: &str) -> Self {
        let params = t.model.params().entries();
        let mut arrays: Vec<(String, Tensor)> = params.iter().map(|(n, v)| (format!("param/{n}"), v.clone())).collect();
        for (prefix, moments) in [("adam.m", &t.adam.m), ("adam.v", &t.adam.v)] {
            for ((n, _), v) in params.iter().zip(moments) {
                arrays.push((format!("{prefix}/{n}"), v.clone()));
            }
        }
        arrays.push(("schedule/alpha_bar".into(), Tensor::vector(sched.alpha_bars().to_vec())));
        let header = Header {
            format_version: FORMAT_VERSION,
            spec: t.model.spec().clone(),
            iteration: t.iteration,
            adam_step: t.adam.step,
            seed,
            training_hash: training_hash.to_string(),
            rng_digest: rng_digest(seed, t.iteration),
            arrays: arrays
                .iter()
                .map(|(name, v)| ArrayInfo {
                    name: name.clone(),
                    shape: v.shape().to_vec(),
                })
                .collect(),
        };
        Self { header, arrays }
    }

    fn array(&self, name: &str) -> Result<&Tensor> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .with_context(|| format!("checkpoint has no array {name}"))
    }

    fn with_prefix(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.arrays
            .iter()
            .filter_map(|(n, v)| n.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect()
    }

    pub fn model(&self) -> Result<EnergyModel> {
        Ok(EnergyModel::from_parts(
            self.header.spec.clone(),
            ParamSet::from_entries(self.with_prefix("param/")),
        )?)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::from_alpha_bar(self.array("schedule/alpha_bar")?.data().to_vec())?)
    }

    /// Rebuild the full training state, ready to resume.
    pub fn trainer(&self) -> Result<Trainer> {
        let model = self.model()?;
        let names: Vec<String> = model.params().names().map(str::to_string).collect();
        let moments = |prefix: &str| -> Result<Vec<Tensor>> {
            names.iter().map(|n| self.array(&format!("{prefix}/{n}")).cloned()).collect()
        };
        let adam = AdamState {
            m: moments("adam.m")?,
            v: moments("adam.v")?,
            step: self.header.adam_step,
        };
        ensure!(
            self.header.rng_digest == rng_digest(self.header.seed, self.header.iteration),
            "checkpoint generator digest does not match its seed and iteration"
        );
        Ok(Trainer {
            model,
            adam,
            iteration: self.header.iteration,
            history: Vec::new(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.arrays.iter().map(|(_, v)| v.numel()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in &self.arrays {
            for x in v.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).context("checkpoint truncated")?;
        ensure!(&magic == MAGIC, "not a checkpoint file");
        let mut word = [0u8; 4];
        bytes.read_exact(&mut word).context("checkpoint truncated")?;
        let version = u32::from_le_bytes(word);
        ensure!(version == FORMAT_VERSION, "unsupported checkpoint version {version}");
        let mut len = [0u8; 8];
        bytes.read_exact(&mut len).context("checkpoint truncated")?;
        let len = u64::from_le_bytes(len) as usize;
        ensure!(bytes.len() >= len, "checkpoint truncated");
        let header: Header = serde_json::from_slice(&bytes[..len]).context("bad checkpoint header")?;
        bytes = &bytes[len..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for info in &header.arrays {
            let n: usize = info.shape.iter().product();
            ensure!(bytes.len() >= 8 * n, "checkpoint truncated in array {}", info.name);
            let data = bytes[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            bytes = &bytes[8 * n..];
            arrays.push((info.name.clone(), Tensor::new(info.shape.clone(), data)?));
        }
        if !bytes.is_empty() {
            bail!("{} trailing bytes after the last array", bytes.len());
        }
        Ok(Self { header, arrays })
    }

    /// Write through a temporary file so a crash never leaves a partial
    /// checkpoint under the final name.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            f.write_all(&self.to_bytes()?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("in checkpoint {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use ired_core::model::Architecture;

    use super::*;

    fn trainer() -> Trainer {
        let spec = ModelSpec {
            arch: Architecture::MlpEnergy,
            width: 4,
            depth: 2,
            x_dim: 2,
            y_dim: 2,
            levels: 10,
        };
        let mut t = Trainer::new(EnergyModel::build(spec, 3).unwrap());
        t.adam.m[0] = t.adam.m[0].map(|_| 0.1 + f64::EPSILON);
        t.adam.step = 7;
        t.iteration = 7;
        t
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = trainer();
        let sched = NoiseSchedule::cosine(10).unwrap();
        let c = Checkpoint::from_trainer(&t, &sched, 5, "abc");
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        let r = back.trainer().unwrap();
        assert_eq!(r.model, t.model);
        assert_eq!(r.adam, t.adam);
        assert_eq!(r.iteration, 7);
        assert_eq!(back.schedule().unwrap(), sched);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let c = Checkpoint::from_trainer(&trainer(), &NoiseSchedule::cosine(10).unwrap(), 0, "");
        let bytes = c.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&[bytes.as_slice(), &[0]].concat()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut digest = c.clone();
        digest.header.rng_digest = "0".into();
        assert!(digest.trainer().is_err());
    }
}
