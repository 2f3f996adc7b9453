use super::{level_rows, linear, Bound, ModelSpec, ParamBuilder};
use crate::error::Result;
use crate::graph::Var;

pub(super) fn init(spec: &ModelSpec, b: &mut ParamBuilder) {
    let w = spec.width;
    b.linear("hidden0", spec.x_dim + spec.y_dim, w);
    for l in 1..spec.depth {
        b.linear(&format!("hidden{l}"), w, w);
    }
    b.linear("head", w, 1);
    b.embedding("level_embedding", spec.levels + 1, w);
}

pub(super) fn forward<'g>(spec: &ModelSpec, p: &Bound<'g>, x: Var<'g>, y: Var<'g>, levels: &[usize]) -> Result<Var<'g>> {
    let input = Var::concat_cols(&[x, y])?;
    let mut h = linear(p, "hidden0", input)?
        .add(level_rows(p, levels.to_vec(), spec.width)?)?
        .silu();
    for l in 1..spec.depth {
        h = linear(p, &format!("hidden{l}"), h)?.silu();
    }
    linear(p, "head", h)?.reshape(&[levels.len()])
}
