//! Relational energy over a `[horizon, n]` plan.
//!
//! Rows are `(t, i)` node-at-step features: the plan entry `y[t][i]`, start
//! and goal markers for node `i`, and a first-step flag. Each layer combines a
//! row with the sums over out-neighbors and in-neighbors of `i` at the same
//! step (sum pooling over the adjacency) and with node `i` at steps `t − 1`
//! and `t + 1` (zero outside the horizon). This is a small spatial-temporal
//! graph network; the energy is `½‖o‖²` over one output per row.
//!
//! The adjacency enters structurally (as message routes), so the energy is not
//! differentiated with respect to it.

use std::rc::Rc;

use super::{half_sq_norm_per_instance, level_rows, linear, project, repeat_each, Bound, ModelSpec, ParamBuilder};
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::tensor::Tensor;

const NODE_FEATURES: usize = 4;

/// `(nodes, horizon)` for `x = [adjacency n², start n, goal n]`, `y = [horizon, n]`.
pub fn plan_dims(x_dim: usize, y_dim: usize) -> Result<(usize, usize)> {
    let n = ((1.0 + x_dim as f64).sqrt() - 1.0).round() as usize;
    if n < 2 || n * n + 2 * n != x_dim || y_dim % n != 0 || y_dim == 0 {
        return Err(Error::ModelSpec(format!(
            "plan energy needs x = n²+2n and y = horizon·n, got x_dim {x_dim}, y_dim {y_dim}"
        )));
    }
    Ok((n, y_dim / n))
}

pub(super) fn init(spec: &ModelSpec, b: &mut ParamBuilder) {
    let w = spec.width;
    b.linear("input", NODE_FEATURES, w);
    b.embedding("level_embedding", spec.levels + 1, w);
    for l in 0..spec.depth {
        b.linear(&format!("layer{l}.self"), w, w);
        b.weight(&format!("layer{l}.prev"), w, w);
        b.weight(&format!("layer{l}.next"), w, w);
        b.weight(&format!("layer{l}.out"), w, w);
        b.weight(&format!("layer{l}.in"), w, w);
        b.linear(&format!("layer{l}.update"), w, w);
    }
    b.linear("head", w, 1);
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
    let (n, horizon) = plan_dims(dx, y.value().dims2()?.1)?;
    let w = spec.width;
    let per = horizon * n;
    let rows = batch * per;
    let g = x.graph();

    let flat_x = x.reshape(&[batch * dx])?;
    let marker = |offset: usize| -> Result<Var<'g>> {
        let index: Rc<[usize]> = (0..rows).map(|r| (r / per) * dx + offset + r % n).collect::<Vec<_>>().into();
        flat_x.gather_rows(index, 1)
    };
    let first = Tensor::new(
        vec![rows, 1],
        (0..rows).map(|r| if (r % per) < n { 1.0 } else { 0.0 }).collect(),
    )?;
    let feat = Var::concat_cols(&[y.reshape(&[rows, 1])?, marker(n * n)?, marker(n * n + n)?, g.constant(first)])?;
    let mut h = linear(p, "input", feat)?.add(level_rows(p, repeat_each(levels, per), w)?)?;

    // message routes along edges i → j, per instance and step
    let xv = x.value();
    let (mut out_src, mut out_dst) = (Vec::new(), Vec::new());
    for b in 0..batch {
        let adj = &xv.row(b)[..n * n];
        for i in 0..n {
            for j in 0..n {
                if adj[i * n + j] > 0.5 {
                    for t in 0..horizon {
                        let base = b * per + t * n;
                        out_src.push(base + j);
                        out_dst.push(base + i);
                    }
                }
            }
        }
    }
    let (out_src, out_dst): (Rc<[usize]>, Rc<[usize]>) = (out_src.into(), out_dst.into());

    let pad = rows;
    let identity: Rc<[usize]> = (0..rows).collect::<Vec<_>>().into();
    let prev: Rc<[usize]> = (0..rows)
        .map(|r| if (r % per) >= n { r - n } else { pad })
        .collect::<Vec<_>>()
        .into();
    let next: Rc<[usize]> = (0..rows)
        .map(|r| if (r % per) + n < per { r + n } else { pad })
        .collect::<Vec<_>>()
        .into();

    for l in 0..spec.depth {
        let z = h.silu();
        let padded = z.scatter_add_rows(Rc::clone(&identity), w, rows + 1)?;
        let zp = padded.gather_rows(Rc::clone(&prev), w)?;
        let zn = padded.gather_rows(Rc::clone(&next), w)?;
        let m_out = z
            .gather_rows(Rc::clone(&out_src), w)?
            .scatter_add_rows(Rc::clone(&out_dst), w, rows)?;
        let m_in = z
            .gather_rows(Rc::clone(&out_dst), w)?
            .scatter_add_rows(Rc::clone(&out_src), w, rows)?;
        let mixed = linear(p, &format!("layer{l}.self"), z)?
            .add(project(p, &format!("layer{l}.prev"), zp)?)?
            .add(project(p, &format!("layer{l}.next"), zn)?)?
            .add(project(p, &format!("layer{l}.out"), m_out)?)?
            .add(project(p, &format!("layer{l}.in"), m_in)?)?;
        h = h.add(linear(p, &format!("layer{l}.update"), mixed.silu())?)?;
    }
    let o = linear(p, "head", h.silu())?;
    half_sq_norm_per_instance(o, batch)
}
