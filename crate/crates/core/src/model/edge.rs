//! Relational energy over directed edges.
//!
//! Each ordered pair `(i, j)` carries features from `adj[i][j]`, `y[i][j]`,
//! their transposes, and a self-loop flag. A composition round forms
//! `f(e_ik, e_kj)` for every intermediate node `k` and keeps the maximum over
//! `k`, which is how reachability composes along paths. The head maps every
//! edge to one output and the energy is `½‖o‖²`.
//!
//! The network does not depend on the node count, so a model trained on one
//! graph size evaluates on others.

use std::rc::Rc;

use super::{half_sq_norm_per_instance, level_rows, linear, project, repeat_each, Bound, ModelSpec, ParamBuilder};
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::tensor::Tensor;

const EDGE_FEATURES: usize = 5;

pub(super) fn node_count(x_dim: usize, y_dim: usize) -> Result<usize> {
    let n = (x_dim as f64).sqrt().round() as usize;
    if n * n != x_dim || y_dim != x_dim || n < 2 {
        return Err(Error::ModelSpec(format!(
            "edge energy needs n×n adjacency and reachability, got x_dim {x_dim}, y_dim {y_dim}"
        )));
    }
    Ok(n)
}

pub(super) fn init(spec: &ModelSpec, b: &mut ParamBuilder) {
    let w = spec.width;
    b.linear("input", EDGE_FEATURES, w);
    b.embedding("level_embedding", spec.levels + 1, w);
    for r in 0..spec.depth {
        b.linear(&format!("round{r}.left"), w, w);
        b.weight(&format!("round{r}.right"), w, w);
        b.linear(&format!("round{r}.self"), w, w);
        b.weight(&format!("round{r}.msg"), w, w);
        b.linear(&format!("round{r}.out"), w, w);
    }
    b.linear("head", w, 1);
}

/// Per-instance transpose of `[B, n²]` as a `[B·n², 1]` column.
fn transposed_column<'g>(v: Var<'g>, batch: usize, n: usize) -> Result<Var<'g>> {
    let nn = n * n;
    let index: Rc<[usize]> = (0..batch * nn)
        .map(|r| {
            let (b, e) = (r / nn, r % nn);
            b * nn + (e % n) * n + e / n
        })
        .collect::<Vec<_>>()
        .into();
    v.reshape(&[batch * nn])?.gather_rows(index, 1)
}

pub(super) fn forward<'g>(
    spec: &ModelSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    y: Var<'g>,
    levels: &[usize],
    batch: usize,
) -> Result<Var<'g>> {
    let (_, dx) = x.value().dims2()?;
    let n = node_count(dx, y.value().dims2()?.1)?;
    let (nn, w) = (n * n, spec.width);
    let rows = batch * nn;
    let g = x.graph();

    let diag = Tensor::new(
        vec![rows, 1],
        (0..rows).map(|r| if (r % nn) / n == r % n { 1.0 } else { 0.0 }).collect(),
    )?;
    let feat = Var::concat_cols(&[
        x.reshape(&[rows, 1])?,
        y.reshape(&[rows, 1])?,
        transposed_column(x, batch, n)?,
        transposed_column(y, batch, n)?,
        g.constant(diag),
    ])?;
    let mut e = linear(p, "input", feat)?.add(level_rows(p, repeat_each(levels, nn), w)?)?;

    // triple (b, i, k, j) reads edge (b, i, k) on the left and (b, k, j) on the right
    let triples = batch * nn * n;
    let left: Rc<[usize]> = (0..triples)
        .map(|t| {
            let (b, i, k) = (t / (nn * n), (t / nn) % n, (t / n) % n);
            b * nn + i * n + k
        })
        .collect::<Vec<_>>()
        .into();
    let right: Rc<[usize]> = (0..triples)
        .map(|t| {
            let (b, k, j) = (t / (nn * n), (t / n) % n, t % n);
            b * nn + k * n + j
        })
        .collect::<Vec<_>>()
        .into();

    for r in 0..spec.depth {
        let z = e.silu();
        let lhs = linear(p, &format!("round{r}.left"), z)?.gather_rows(Rc::clone(&left), w)?;
        let rhs = project(p, &format!("round{r}.right"), z)?.gather_rows(Rc::clone(&right), w)?;
        let composed = lhs.add(rhs)?.silu();
        let best = composed.max_middle(batch * n, n, n * w)?.reshape(&[rows, w])?;
        let update = linear(p, &format!("round{r}.self"), z)?.add(project(p, &format!("round{r}.msg"), best)?)?;
        e = e.add(linear(p, &format!("round{r}.out"), update.silu())?)?;
    }
    let o = linear(p, "head", e.silu())?;
    half_sq_norm_per_instance(o, batch)
}
