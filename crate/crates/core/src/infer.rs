//! Annealed gradient-descent solving.
//!
//! A candidate starts as standard normal noise and descends each landscape
//! from `K − 1` down to `1` with `T` steps of `y ← y − λ_k·∇_y E(x, y, k)`.
//! With the acceptance check on, a step is kept only if it strictly lowers
//! the energy of the same landscape. Between landscapes the candidate is
//! rescaled by `√(ᾱ_{k−1}/ᾱ_k)`, so the last rescale lands it at level 0.
//!
//! Solves are batched: rows are independent instances with their own noise
//! stream, acceptance decision and trace.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::rng::{normal_vec, stream, tag};
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Steps per landscape.
    pub steps: usize,
    /// Step size per level, indexed `0..=K`.
    pub lambda: Vec<f64>,
    #[serde(default = "yes")]
    pub acceptance_check: bool,
    /// Replace landscape descent with one ancestral reverse-diffusion step
    /// per level.
    #[serde(default)]
    pub noisy_mode: bool,
    /// Also descend the clean landscape (level 0) after the last rescale.
    #[serde(default)]
    pub polish: bool,
    #[serde(default)]
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl SolveConfig {
    /// `λ_k = lambda0·σ_k²`, with level 0 sharing level 1's size.
    pub fn scaled(sched: &NoiseSchedule, lambda0: f64, steps: usize, seed: u64) -> Self {
        let mut lambda: Vec<f64> = (0..=sched.levels()).map(|k| lambda0 * sched.sigma(k).powi(2)).collect();
        if lambda.len() > 1 {
            lambda[0] = lambda[1];
        }
        Self {
            steps,
            lambda,
            acceptance_check: true,
            noisy_mode: false,
            polish: false,
            seed,
        }
    }

    /// The same step size at every level.
    pub fn constant(levels: usize, lambda: f64, steps: usize, seed: u64) -> Self {
        Self {
            steps,
            lambda: vec![lambda; levels + 1],
            acceptance_check: true,
            noisy_mode: false,
            polish: false,
            seed,
        }
    }

    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.lambda.len() != levels + 1 {
            return Err(Error::Config(format!(
                "need {} step sizes, got {}",
                levels + 1,
                self.lambda.len()
            )));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("step sizes must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeTrace {
    pub level: usize,
    pub steps: Vec<StepRecord>,
    /// Candidate after the last step at this level, before rescaling.
    pub y: Vec<f64>,
}

impl LandscapeTrace {
    /// Energy of the candidate held after the last step, if any step ran.
    pub fn final_energy(&self) -> Option<f64> {
        self.steps.last().map(|s| if s.accepted { s.energy_after } else { s.energy_before })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub landscapes: Vec<LandscapeTrace>,
}

fn as_batch(x: &Tensor, what: &'static str) -> Result<Tensor> {
    match x.rank() {
        1 => x.reshape(&[1, x.numel()]),
        2 => Ok(x.clone()),
        _ => Err(Error::Rank {
            op: what,
            expected: 2,
            shape: x.shape().to_vec(),
        }),
    }
}

fn row_vec(t: &Tensor, i: usize) -> Vec<f64> {
    t.row(i).to_vec()
}

/// `T` descent steps on landscape `k` for a batch. `traces[b]` receives the
/// step records of row `b`.
fn descend(
    m: &EnergyModel,
    xs: &Tensor,
    y0: Tensor,
    k: usize,
    steps: usize,
    lambda: f64,
    accept: bool,
    traces: &mut [SolveTrace],
) -> Result<Tensor> {
    let (b, d) = y0.dims2()?;
    let levels = vec![k; b];
    let mut y = y0;
    let mut records: Vec<Vec<StepRecord>> = vec![Vec::with_capacity(steps); b];
    if steps > 0 {
        let (mut e, mut g) = m.energies_and_grad(xs, &y, &levels)?;
        for t in 0..steps {
            let proposal = y.zip_map(&g, "descent", |y, g| y - lambda * g)?;
            let (e_new, g_new) = m.energies_and_grad(xs, &proposal, &levels)?;
            let mut next = y.clone();
            let mut grad = g.clone();
            for i in 0..b {
                let ok = !accept || e_new[i] < e[i];
                records[i].push(StepRecord {
                    step: t,
                    energy_before: e[i],
                    energy_after: e_new[i],
                    accepted: ok,
                });
                if !e[i].is_finite() || (ok && !e_new[i].is_finite()) {
                    let mut trace = traces[i].clone();
                    trace.landscapes.push(LandscapeTrace {
                        level: k,
                        steps: std::mem::take(&mut records[i]),
                        y: row_vec(&y, i),
                    });
                    return Err(Error::NonFiniteEnergy {
                        level: k,
                        step: t,
                        trace: Box::new(trace),
                    });
                }
                if ok {
                    next.data_mut()[i * d..(i + 1) * d].copy_from_slice(proposal.row(i));
                    grad.data_mut()[i * d..(i + 1) * d].copy_from_slice(g_new.row(i));
                    e[i] = e_new[i];
                }
            }
            y = next;
            g = grad;
        }
    }
    for (i, r) in records.into_iter().enumerate() {
        traces[i].landscapes.push(LandscapeTrace {
            level: k,
            steps: r,
            y: row_vec(&y, i),
        });
    }
    Ok(y)
}

/// `T` steps of `y' = y − λ·∇_y E(x, y, k)` for one instance, with the
/// acceptance check if requested.
pub fn optimize_landscape(
    m: &EnergyModel,
    x: &Tensor,
    y0: &Tensor,
    k: usize,
    steps: usize,
    lambda: f64,
    acceptance_check: bool,
) -> Result<(Tensor, LandscapeTrace)> {
    let xs = as_batch(x, "optimize landscape")?;
    let ys = as_batch(y0, "optimize landscape")?;
    let mut traces = vec![SolveTrace::default()];
    let y = descend(m, &xs, ys, k, steps, lambda, acceptance_check, &mut traces)?;
    let trace = traces.pop().and_then(|mut t| t.landscapes.pop()).expect("one landscape recorded");
    Ok((y.reshape(y0.shape())?, trace))
}

/// Initial candidates: row `i` draws from the stream `(seed, SOLVE, ids[i])`.
pub fn initial_noise(seed: u64, ids: &[u64], y_dim: usize) -> Tensor {
    let data = ids
        .iter()
        .flat_map(|&id| normal_vec(&mut stream(seed, &[tag::SOLVE, id]), y_dim))
        .collect();
    Tensor::new(vec![ids.len(), y_dim], data).expect("length matches")
}

/// Solve a batch `xs: [B, dx]`. `ids` keys each row's random streams, so a
/// row's result does not depend on which batch it is solved in.
pub fn anneal_solve_batch(
    m: &EnergyModel,
    xs: &Tensor,
    sched: &NoiseSchedule,
    cfg: &SolveConfig,
    ids: &[u64],
) -> Result<(Tensor, Vec<SolveTrace>)> {
    anneal_solve_batch_sized(m, xs, m.spec().y_dim, sched, cfg, ids)
}

/// [`anneal_solve_batch`] with candidates of width `y_dim`, for relational
/// models evaluated on a different graph size than they were built for.
pub fn anneal_solve_batch_sized(
    m: &EnergyModel,
    xs: &Tensor,
    y_dim: usize,
    sched: &NoiseSchedule,
    cfg: &SolveConfig,
    ids: &[u64],
) -> Result<(Tensor, Vec<SolveTrace>)> {
    let k_max = sched.levels();
    if k_max != m.levels() {
        return Err(Error::Config(format!(
            "schedule has {k_max} levels, model {}",
            m.levels()
        )));
    }
    cfg.validate(k_max)?;
    let (b, _) = xs.dims2()?;
    if ids.len() != b {
        return Err(Error::ShapeMismatch {
            op: "solve ids",
            lhs: vec![b],
            rhs: vec![ids.len()],
        });
    }
    let d = y_dim;
    let mut y = initial_noise(cfg.seed, ids, d);
    let mut traces = vec![SolveTrace::default(); b];
    for k in (1..k_max).rev() {
        if cfg.noisy_mode {
            let mut next = Vec::with_capacity(b * d);
            let (_, eps_hat) = m.energies_and_grad(xs, &y, &vec![k; b])?;
            for (i, &id) in ids.iter().enumerate() {
                let mut rng = stream(cfg.seed, &[tag::REVERSE, id, k as u64]);
                let row = Tensor::vector(row_vec(&y, i));
                let e = Tensor::vector(row_vec(&eps_hat, i));
                next.extend(reverse_update(&row, &e, k, sched, &mut rng)?.into_data());
            }
            y = Tensor::new(vec![b, d], next)?;
            for (i, t) in traces.iter_mut().enumerate() {
                t.landscapes.push(LandscapeTrace {
                    level: k,
                    steps: Vec::new(),
                    y: row_vec(&y, i),
                });
            }
        } else {
            y = descend(m, xs, y, k, cfg.steps, cfg.lambda[k], cfg.acceptance_check, &mut traces)?;
            y = y.scale(sched.rescale_factor(k, k - 1)?);
        }
    }
    if cfg.polish {
        y = descend(m, xs, y, 0, cfg.steps, cfg.lambda[0], cfg.acceptance_check, &mut traces)?;
    }
    Ok((y, traces))
}

/// Solve one instance; identical to row 0 of a batch with id 0.
pub fn anneal_solve(m: &EnergyModel, x: &Tensor, sched: &NoiseSchedule, cfg: &SolveConfig) -> Result<(Tensor, SolveTrace)> {
    let xs = as_batch(x, "anneal solve")?;
    let (y, mut traces) = anneal_solve_batch(m, &xs, sched, cfg, &[0])?;
    Ok((y.reshape(&[y.numel()])?, traces.pop().expect("one trace")))
}

/// DDPM posterior step from level `k` to `k − 1` with a given noise
/// prediction `eps_hat`:
///
/// ```text
/// ŷ₀   = (y − σ_k·ε̂) / √ᾱ_k
/// mean = √ᾱ_{k−1}·β_k/(1−ᾱ_k)·ŷ₀ + √α_k·(1−ᾱ_{k−1})/(1−ᾱ_k)·y
/// var  = β_k·(1−ᾱ_{k−1})/(1−ᾱ_k)
/// ```
///
/// with `α_k = ᾱ_k/ᾱ_{k−1}`, `β_k = 1 − α_k`. `ᾱ_k` is floored like
/// rescaling. No noise is added when stepping to level 0.
pub fn reverse_update(y: &Tensor, eps_hat: &Tensor, k: usize, sched: &NoiseSchedule, rng: &mut impl Rng) -> Result<Tensor> {
    if k == 0 || k > sched.levels() {
        return Err(Error::Level {
            level: k,
            max: sched.levels(),
        });
    }
    let ab = sched.alpha_bar(k).max(crate::schedule::RESCALE_FLOOR);
    let ab_prev = sched.alpha_bar(k - 1);
    let alpha = ab / ab_prev;
    let beta = 1.0 - alpha;
    let sigma = (1.0 - ab).sqrt();
    let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
    let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let std = (beta * (1.0 - ab_prev) / (1.0 - ab)).max(0.0).sqrt();
    let noise = if k > 1 { normal_vec(rng, y.numel()) } else { vec![0.0; y.numel()] };
    let mut out = y.zip_map(eps_hat, "reverse step", |y, e| {
        let y0 = (y - sigma * e) / ab.sqrt();
        c0 * y0 + ct * y
    })?;
    for (o, z) in out.data_mut().iter_mut().zip(noise) {
        *o += std * z;
    }
    Ok(out)
}

/// One ancestral reverse-diffusion step using `∇_y E` as the noise predictor.
pub fn noisy_reverse_step(
    m: &EnergyModel,
    x: &Tensor,
    y: &Tensor,
    k: usize,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let eps_hat = m.gradient_y(x, y, k)?;
    reverse_update(y, &eps_hat, k, sched, rng)
}

#[cfg(test)]
mod tests;
