//! The K-level cosine noise ladder.
//!
//! Level 0 is the clean landscape and level K is pure noise. At level `k` a
//! clean label `y` is corrupted to `√ᾱ_k·y + σ_k·ε` with `σ_k = √(1 − ᾱ_k)`.
//!
//! `ᾱ_k = f(k)/f(0)` with `f(k) = cos²(((k/K + s)/(1 + s))·π/2)` and
//! `s = 0.008`; the endpoints are pinned to exactly 1 and 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Offset of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;

/// Smallest `ᾱ` used as a divisor when rescaling out of the noisiest level.
pub const RESCALE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    levels: usize,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine ladder with `levels` noisy landscapes.
    pub fn cosine(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Schedule("need at least one level".into()));
        }
        let f = |k: usize| {
            let t = (k as f64 / levels as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (t * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let f0 = f(0);
        let mut alpha_bar: Vec<f64> = (0..=levels).map(|k| f(k) / f0).collect();
        alpha_bar[0] = 1.0;
        alpha_bar[levels] = 0.0;
        Self::from_alpha_bar(alpha_bar)
    }

    /// Rebuild a schedule from stored `ᾱ` values, checking the invariants.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::Schedule("need at least two entries".into()));
        }
        let levels = alpha_bar.len() - 1;
        if alpha_bar[0] != 1.0 || alpha_bar[levels] != 0.0 {
            return Err(Error::Schedule("endpoints must be exactly 1 and 0".into()));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Schedule("alpha_bar must be strictly decreasing".into()));
        }
        let sigma = alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect();
        Ok(Self {
            levels,
            alpha_bar,
            sigma,
        })
    }

    /// Number of noisy landscapes K.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bar[k]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigma[k]
    }

    /// Retention factor `√ᾱ_k`.
    pub fn retention(&self, k: usize) -> f64 {
        self.alpha_bar[k].sqrt()
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k > self.levels {
            Err(Error::Level {
                level: k,
                max: self.levels,
            })
        } else {
            Ok(())
        }
    }

    /// `√ᾱ_k·y + σ_k·eps`.
    pub fn corrupt(&self, y: &Tensor, k: usize, eps: &Tensor) -> Result<Tensor> {
        self.check_level(k)?;
        let (a, s) = (self.retention(k), self.sigma(k));
        y.zip_map(eps, "corrupt", |y, e| a * y + s * e)
    }

    /// Factor `√ᾱ_to / √ᾱ_from`, with `ᾱ_from` floored at [`RESCALE_FLOOR`].
    pub fn rescale_factor(&self, from: usize, to: usize) -> Result<f64> {
        self.check_level(from)?;
        self.check_level(to)?;
        Ok((self.alpha_bar[to] / self.alpha_bar[from].max(RESCALE_FLOOR)).sqrt())
    }

    /// Move a candidate from landscape `from` to the next cleaner landscape
    /// `to = from − 1`.
    pub fn rescale_between(&self, y: &Tensor, from: usize, to: usize) -> Result<Tensor> {
        if from == 0 || to + 1 != from {
            return Err(Error::Schedule(format!(
                "rescale must step from level k to k-1, got {from} -> {to}"
            )));
        }
        Ok(y.scale(self.rescale_factor(from, to)?))
    }
}
