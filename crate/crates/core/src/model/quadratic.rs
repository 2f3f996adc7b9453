//! `E = ½·s_k·‖y − m_k·(W x + b)‖²`.
//!
//! `m_k` starts at the cosine retention `√ᾱ_k` and `s_k` at 1, so the
//! minimizer at level `k` is the level-`k` image of the affine target
//! `W x + b`. Setting `s_k = 1/σ_k` turns the head into an exact noise
//! predictor for the target.

use super::{repeat_cols_index, Bound, ModelSpec, ParamBuilder};
use crate::error::Result;
use crate::graph::Var;
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

pub(super) fn init(spec: &ModelSpec, b: &mut ParamBuilder) {
    b.fixed("target.w", Tensor::zeros(&[spec.x_dim, spec.y_dim]));
    b.fixed("target.b", Tensor::zeros(&[spec.y_dim]));
    let sched = NoiseSchedule::cosine(spec.levels).expect("levels validated");
    let means = (0..=spec.levels).map(|k| sched.retention(k)).collect();
    b.fixed("level.mean", Tensor::vector(means));
    b.fixed("level.stiffness", Tensor::ones(&[spec.levels + 1]));
}

pub(super) fn forward<'g>(
    spec: &ModelSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    y: Var<'g>,
    levels: &[usize],
    batch: usize,
) -> Result<Var<'g>> {
    let ks: std::rc::Rc<[usize]> = levels.to_vec().into();
    let target = x.matmul(p.get("target.w")?)?.add_row(p.get("target.b")?)?;
    let mean = p.get("level.mean")?.gather_rows(ks.clone(), 1)?;
    let stiff = p.get("level.stiffness")?.gather_rows(ks, 1)?.reshape(&[batch])?;
    let mean = mean.gather_rows(repeat_cols_index(batch, spec.y_dim), 1)?.reshape(&[batch, spec.y_dim])?;
    let diff = y.sub(target.mul(mean)?)?;
    let half = diff.square()?.sum_cols()?.scale(0.5);
    half.mul(stiff)
}
