//! Denoising-score plus contrastive training.
//!
//! Each step draws a batch with replacement, a level `k ∈ 1..=K` and noise
//! `ε ~ N(0, I)` per instance, and minimizes
//! `mean ‖∇_y E(x, √ᾱ_k·y* + σ_k·ε, k) − ε‖² + w·mean softplus(E⁺ − E⁻)`,
//! where `E⁺`/`E⁻` are energies of the positive and negative labels corrupted
//! with the same `ε`. The first term needs the θ-gradient of a y-gradient,
//! which the graph provides by differentiating the recorded backward pass.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{softplus, Graph, Var};
use crate::model::{Bound, EnergyModel};
use crate::rng::{normal_tensor, stream, tag};
use crate::schedule::NoiseSchedule;
use crate::tasks::OutputKind;
use crate::tensor::Tensor;

/// How negatives for the contrastive term are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeSpec {
    /// Standard deviation of the perturbation `ζ` for continuous outputs.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    /// Acceptance-free descent steps applied after the perturbation.
    #[serde(default = "default_negative_steps")]
    pub steps: usize,
    /// Base step size; level `k` uses `lambda0·σ_k²`.
    #[serde(default = "default_lambda0")]
    pub lambda0: f64,
    /// Fraction of categorical groups resampled for discrete outputs.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Use the continuous recipe on discrete outputs too.
    #[serde(default)]
    pub optimizer_negatives: bool,
}

fn default_noise_std() -> f64 {
    0.3
}
fn default_negative_steps() -> usize {
    2
}
fn default_lambda0() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    0.2
}

impl Default for NegativeSpec {
    fn default() -> Self {
        Self {
            noise_std: default_noise_std(),
            steps: default_negative_steps(),
            lambda0: default_lambda0(),
            rho: default_rho(),
            optimizer_negatives: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch: usize,
    pub lr: f64,
    pub iterations: usize,
    #[serde(default = "default_weight")]
    pub contrastive_weight: f64,
    #[serde(default)]
    pub negative: NegativeSpec,
    #[serde(default)]
    pub seed: u64,
    pub levels: usize,
}

fn default_weight() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch == 0 {
            return bad("batch must be >= 1");
        }
        // zero is allowed as a null update
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be finite and >= 0");
        }
        if !(self.contrastive_weight >= 0.0) {
            return bad("contrastive weight must be >= 0");
        }
        if self.levels == 0 {
            return bad("levels must be >= 1");
        }
        let n = &self.negative;
        if !(n.noise_std >= 0.0) || !(n.lambda0 > 0.0) || !(0.0..=1.0).contains(&n.rho) {
            return bad("negative spec needs noise_std >= 0, lambda0 > 0, 0 <= rho <= 1");
        }
        Ok(())
    }
}

/// Per-instance levels and shared noise for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub levels: Vec<usize>,
    pub eps: Tensor,
}

impl NoiseDraw {
    pub fn sample(rng: &mut impl Rng, batch: usize, y_dim: usize, levels: usize) -> Self {
        let ks = (0..batch).map(|_| rng.gen_range(1..=levels)).collect();
        Self {
            levels: ks,
            eps: normal_tensor(rng, &[batch, y_dim]),
        }
    }
}

/// Row-wise `√ᾱ_k·y + σ_k·ε` for `y, ε: [B, d]`.
pub fn corrupt_rows(sched: &NoiseSchedule, y: &Tensor, levels: &[usize], eps: &Tensor) -> Result<Tensor> {
    let (b, d) = y.dims2()?;
    if eps.shape() != y.shape() || levels.len() != b {
        return Err(Error::ShapeMismatch {
            op: "corrupt rows",
            lhs: y.shape().to_vec(),
            rhs: eps.shape().to_vec(),
        });
    }
    let mut out = Vec::with_capacity(b * d);
    for (i, &k) in levels.iter().enumerate() {
        let (a, s) = (sched.retention(k), sched.sigma(k));
        out.extend(y.row(i).iter().zip(eps.row(i)).map(|(y, e)| a * y + s * e));
    }
    Tensor::new(vec![b, d], out)
}

fn per_row_scale(levels: &[usize], d: usize, f: impl Fn(usize) -> f64) -> Tensor {
    let data = levels.iter().flat_map(|&k| std::iter::repeat(f(k)).take(d)).collect();
    Tensor::new(vec![levels.len(), d], data).expect("length matches")
}

/// Graph form of the denoising loss, `mean_b ‖∇_y E − ε‖²`.
pub fn denoising_loss_var<'g>(
    m: &EnergyModel,
    p: &Bound<'g>,
    x: Var<'g>,
    y_noisy: &Tensor,
    draw: &NoiseDraw,
) -> Result<(Var<'g>, Var<'g>)> {
    let g = x.graph();
    let yv = g.var(y_noisy.clone());
    let (e, gy) = m.energy_and_grad_y(p, x, yv, &draw.levels)?;
    let diff = gy.sub(g.constant(draw.eps.clone()))?;
    let batch = draw.levels.len() as f64;
    Ok((diff.sq_l2().scale(1.0 / batch), e))
}

/// Denoising loss of a batch `x: [B, dx]`, `y*: [B, dy]` with fresh draws.
pub fn denoising_loss(
    m: &EnergyModel,
    xs: &Tensor,
    ys: &Tensor,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (b, d) = ys.dims2()?;
    let draw = NoiseDraw::sample(rng, b, d, sched.levels());
    let g = Graph::new();
    let p = m.bind(&g, false);
    let noisy = corrupt_rows(sched, ys, &draw.levels, &draw.eps)?;
    let (loss, _) = denoising_loss_var(m, &p, g.constant(xs.clone()), &noisy, &draw)?;
    loss.item()
}

/// `softplus(E⁺ − E⁻)` for a single instance, both labels corrupted with `eps`.
pub fn contrastive_loss(
    m: &EnergyModel,
    x: &Tensor,
    y_star: &Tensor,
    y_neg: &Tensor,
    k: usize,
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let pos = m.eval(x, &sched.corrupt(y_star, k, eps)?, k)?;
    let neg = m.eval(x, &sched.corrupt(y_neg, k, eps)?, k)?;
    Ok(softplus(pos - neg))
}

/// Graph form: batch mean of `softplus(E⁺ − E⁻)`. Gradients reach both terms.
pub fn contrastive_loss_var<'g>(
    m: &EnergyModel,
    p: &Bound<'g>,
    x: Var<'g>,
    e_pos: Var<'g>,
    y_neg: &Tensor,
    draw: &NoiseDraw,
    sched: &NoiseSchedule,
) -> Result<Var<'g>> {
    let noisy_neg = corrupt_rows(sched, y_neg, &draw.levels, &draw.eps)?;
    let e_neg = m.forward(p, x, x.graph().constant(noisy_neg), &draw.levels)?;
    Ok(e_pos.sub(e_neg)?.softplus().mean())
}

/// Negative labels for a batch. Continuous outputs (or
/// `optimizer_negatives`) take `y* + ζ` followed by `spec.steps` plain
/// descent steps at level `k`; discrete outputs resample
/// `round(rho·groups)` categorical groups uniformly.
pub fn make_negative(
    m: &EnergyModel,
    xs: &Tensor,
    ys: &Tensor,
    levels: &[usize],
    output: OutputKind,
    spec: &NegativeSpec,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let (b, d) = ys.dims2()?;
    match output {
        OutputKind::Continuous => descend_negative(m, xs, ys, levels, spec, sched, rng),
        _ if spec.optimizer_negatives => descend_negative(m, xs, ys, levels, spec, sched, rng),
        OutputKind::Binary => Ok(resample_groups(ys, b, d, 1, 2, spec.rho, rng)),
        OutputKind::OneHot { classes } => {
            if classes == 0 || d % classes != 0 {
                return Err(Error::ShapeMismatch {
                    op: "one-hot negatives",
                    lhs: vec![d],
                    rhs: vec![classes],
                });
            }
            Ok(resample_groups(ys, b, d, classes, classes, spec.rho, rng))
        }
    }
}

fn descend_negative(
    m: &EnergyModel,
    xs: &Tensor,
    ys: &Tensor,
    levels: &[usize],
    spec: &NegativeSpec,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let d = ys.dims2()?.1;
    let zeta = normal_tensor(rng, ys.shape());
    let mut y = ys.zip_map(&zeta, "negative", |y, z| y + spec.noise_std * z)?;
    let lam = per_row_scale(levels, d, |k| spec.lambda0 * sched.sigma(k).powi(2));
    for _ in 0..spec.steps {
        let (_, g) = m.energies_and_grad(xs, &y, levels)?;
        let step = g.zip_map(&lam, "negative step", |g, l| g * l)?;
        y = y.zip_map(&step, "negative step", |y, s| y - s)?;
    }
    Ok(y)
}

/// Replace `round(rho·groups)` groups per row. A group of width `width`
/// becomes a uniformly drawn one-hot over `classes`; width 1 with two classes
/// is a 0/1 entry.
fn resample_groups(ys: &Tensor, b: usize, d: usize, width: usize, classes: usize, rho: f64, rng: &mut impl Rng) -> Tensor {
    let groups = d / width;
    let count = (rho * groups as f64).round() as usize;
    let mut out = ys.clone();
    let data = out.data_mut();
    for r in 0..b {
        for gi in sample(rng, groups, count.min(groups)) {
            let base = r * d + gi * width;
            let c = rng.gen_range(0..classes);
            if width == 1 {
                data[base] = c as f64;
            } else {
                for j in 0..width {
                    data[base + j] = if j == c { 1.0 } else { 0.0 };
                }
            }
        }
    }
    out
}

/// Adam moments, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(model: &EnergyModel) -> Self {
        let zeros: Vec<Tensor> = model.params().tensors().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn update(&mut self, model: &mut EnergyModel, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, g), m), v) in model
            .params_mut()
            .tensors_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let (pd, gd, md, vd) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gd[i];
                vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gd[i] * gd[i];
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub mse: f64,
    pub contrast: f64,
}

/// Losses and parameter gradients of `mse + weight·contrast` for fixed draws.
/// With `y_neg = None` the contrastive term is skipped and reported as 0.
pub fn loss_and_gradients(
    m: &EnergyModel,
    xs: &Tensor,
    ys: &Tensor,
    draw: &NoiseDraw,
    y_neg: Option<&Tensor>,
    weight: f64,
    sched: &NoiseSchedule,
) -> Result<(StepLosses, Vec<Tensor>)> {
    let g = Graph::new();
    let p = m.bind(&g, true);
    let x = g.constant(xs.clone());
    let noisy = corrupt_rows(sched, ys, &draw.levels, &draw.eps)?;
    let (mse, e_pos) = denoising_loss_var(m, &p, x, &noisy, draw)?;
    let mut total = mse;
    let mut contrast = 0.0;
    if let Some(neg) = y_neg {
        let c = contrastive_loss_var(m, &p, x, e_pos, neg, draw, sched)?;
        contrast = c.item()?;
        total = total.add(c.scale(weight))?;
    }
    let grads = g.grad(total, p.vars())?.into_iter().map(|v| v.tensor()).collect();
    Ok((
        StepLosses {
            mse: mse.item()?,
            contrast,
        },
        grads,
    ))
}

/// Uniform-with-replacement batch indices for `iteration`.
pub fn batch_indices(seed: u64, iteration: usize, batch: usize, len: usize) -> Vec<usize> {
    let mut rng = stream(seed, &[tag::BATCH, iteration as u64]);
    (0..batch).map(|_| rng.gen_range(0..len)).collect()
}

/// Stack the selected `(x, y*)` rows into `[B, dx]` and `[B, dy]`.
pub fn gather_batch(data: &[(Tensor, Tensor)], idx: &[usize]) -> Result<(Tensor, Tensor)> {
    let flat = |t: &Tensor| t.reshape(&[t.numel()]);
    let xs: Vec<Tensor> = idx.iter().map(|&i| flat(&data[i].0)).collect::<Result<_>>()?;
    let ys: Vec<Tensor> = idx.iter().map(|&i| flat(&data[i].1)).collect::<Result<_>>()?;
    Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
}

/// One optimizer step at `iteration`. Every random draw is keyed by
/// `(cfg.seed, iteration)`, so resuming at any iteration reproduces the run.
pub fn train_step(
    m: &mut EnergyModel,
    adam: &mut AdamState,
    xs: &Tensor,
    ys: &Tensor,
    cfg: &TrainConfig,
    output: OutputKind,
    sched: &NoiseSchedule,
    iteration: usize,
) -> Result<StepLosses> {
    let (b, d) = ys.dims2()?;
    let mut noise_rng = stream(cfg.seed, &[tag::NOISE, iteration as u64]);
    let draw = NoiseDraw::sample(&mut noise_rng, b, d, sched.levels());
    let y_neg = if cfg.contrastive_weight > 0.0 {
        let mut rng = stream(cfg.seed, &[tag::NEGATIVE, iteration as u64]);
        Some(make_negative(m, xs, ys, &draw.levels, output, &cfg.negative, sched, &mut rng)?)
    } else {
        None
    };
    let (losses, grads) = loss_and_gradients(m, xs, ys, &draw, y_neg.as_ref(), cfg.contrastive_weight, sched)?;
    if !losses.mse.is_finite() || !losses.contrast.is_finite() {
        return Err(Error::Diverged {
            what: "training loss",
            iteration,
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            what: "parameter gradient",
            iteration,
        });
    }
    adam.update(m, &grads, cfg.lr)?;
    Ok(losses)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub mse: f64,
    pub contrast: f64,
}

/// Training state that can be checkpointed and resumed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: EnergyModel,
    pub adam: AdamState,
    pub iteration: usize,
    pub history: Vec<LossRecord>,
}

impl Trainer {
    pub fn new(model: EnergyModel) -> Self {
        let adam = AdamState::new(&model);
        Self {
            model,
            adam,
            iteration: 0,
            history: Vec::new(),
        }
    }

    /// Run until `cfg.iterations`, calling `on_step` after every step; it may
    /// stop the run early by returning `false`.
    pub fn run(
        &mut self,
        data: &[(Tensor, Tensor)],
        cfg: &TrainConfig,
        output: OutputKind,
        sched: &NoiseSchedule,
        mut on_step: impl FnMut(&Trainer) -> Result<bool>,
    ) -> Result<()> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        if cfg.levels != sched.levels() || cfg.levels != self.model.levels() {
            return Err(Error::Config(format!(
                "level count mismatch: config {}, schedule {}, model {}",
                cfg.levels,
                sched.levels(),
                self.model.levels()
            )));
        }
        while self.iteration < cfg.iterations {
            let it = self.iteration;
            let idx = batch_indices(cfg.seed, it, cfg.batch, data.len());
            let (xs, ys) = gather_batch(data, &idx)?;
            let l = train_step(&mut self.model, &mut self.adam, &xs, &ys, cfg, output, sched, it)?;
            self.history.push(LossRecord {
                iteration: it,
                mse: l.mse,
                contrast: l.contrast,
            });
            self.iteration += 1;
            if !on_step(self)? {
                break;
            }
        }
        Ok(())
    }
}

/// Train a fresh copy of `model` for `cfg.iterations` steps.
pub fn train(
    model: EnergyModel,
    data: &[(Tensor, Tensor)],
    cfg: &TrainConfig,
    output: OutputKind,
    sched: &NoiseSchedule,
) -> Result<Trainer> {
    let mut t = Trainer::new(model);
    t.run(data, cfg, output, sched, |_| Ok(true))?;
    Ok(t)
}
