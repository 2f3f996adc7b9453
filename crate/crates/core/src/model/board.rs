//! Residual per-cell board energy.
//!
//! Each cell carries a feature vector built from its given/mask channels, its
//! candidate values, learned row/column/block embeddings, and the level
//! embedding. Every residual block mixes a cell with the sums over its row,
//! column, and block, which are the cells it shares a constraint with. The
//! head maps each cell to `N` outputs and the energy is `½‖o‖²`.

use std::rc::Rc;

use super::{half_sq_norm_per_instance, level_rows, linear, project, repeat_each, Bound, ModelSpec, ParamBuilder};
use crate::error::{Error, Result};
use crate::graph::Var;

/// Shape of an order-`o` board: side `N = o²`, `N²` cells, `N` digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoardGeometry {
    pub order: usize,
}

impl BoardGeometry {
    pub fn new(order: usize) -> Self {
        Self { order }
    }

    pub fn side(&self) -> usize {
        self.order * self.order
    }

    pub fn cells(&self) -> usize {
        self.side() * self.side()
    }

    /// `x` per cell: one-hot given digit plus a given-mask channel.
    pub fn x_dim(&self) -> usize {
        self.cells() * (self.side() + 1)
    }

    pub fn y_dim(&self) -> usize {
        self.cells() * self.side()
    }

    pub fn row(&self, cell: usize) -> usize {
        cell / self.side()
    }

    pub fn col(&self, cell: usize) -> usize {
        cell % self.side()
    }

    pub fn block(&self, cell: usize) -> usize {
        (self.row(cell) / self.order) * self.order + self.col(cell) / self.order
    }

    pub fn from_dims(x_dim: usize, y_dim: usize) -> Result<Self> {
        (1..=4)
            .map(Self::new)
            .find(|g| g.x_dim() == x_dim && g.y_dim() == y_dim)
            .ok_or_else(|| Error::ModelSpec(format!("no board geometry with x_dim {x_dim} and y_dim {y_dim}")))
    }
}

pub(super) fn init(spec: &ModelSpec, b: &mut ParamBuilder) -> Result<()> {
    let geo = BoardGeometry::from_dims(spec.x_dim, spec.y_dim)?;
    let (n, w) = (geo.side(), spec.width);
    b.linear("input", 2 * n + 1, w);
    b.embedding("row_embedding", n, w);
    b.embedding("col_embedding", n, w);
    b.embedding("block_embedding", n, w);
    b.embedding("level_embedding", spec.levels + 1, w);
    for l in 0..spec.depth {
        b.linear(&format!("block{l}.self"), w, w);
        b.weight(&format!("block{l}.row"), w, w);
        b.weight(&format!("block{l}.col"), w, w);
        b.weight(&format!("block{l}.box"), w, w);
        b.linear(&format!("block{l}.out"), w, w);
    }
    b.linear("head", w, n);
    Ok(())
}

fn group_index(geo: &BoardGeometry, batch: usize, f: impl Fn(usize) -> usize) -> Rc<[usize]> {
    let (n, c) = (geo.side(), geo.cells());
    (0..batch * c).map(|r| (r / c) * n + f(r % c)).collect::<Vec<_>>().into()
}

fn group_sum<'g>(z: Var<'g>, index: &Rc<[usize]>, width: usize, groups: usize) -> Result<Var<'g>> {
    z.scatter_add_rows(Rc::clone(index), width, groups)?.gather_rows(Rc::clone(index), width)
}

pub(super) fn forward<'g>(
    spec: &ModelSpec,
    p: &Bound<'g>,
    x: Var<'g>,
    y: Var<'g>,
    levels: &[usize],
    batch: usize,
) -> Result<Var<'g>> {
    let geo = BoardGeometry::from_dims(spec.x_dim, spec.y_dim)?;
    let (n, c, w) = (geo.side(), geo.cells(), spec.width);
    let rows = batch * c;

    let xr = x.reshape(&[rows, n + 1])?;
    let yr = y.reshape(&[rows, n])?;
    let cell = |f: fn(&BoardGeometry, usize) -> usize| -> Rc<[usize]> {
        (0..rows).map(|r| f(&geo, r % c)).collect::<Vec<_>>().into()
    };
    let pos = p
        .get("row_embedding")?
        .gather_rows(cell(BoardGeometry::row), w)?
        .add(p.get("col_embedding")?.gather_rows(cell(BoardGeometry::col), w)?)?
        .add(p.get("block_embedding")?.gather_rows(cell(BoardGeometry::block), w)?)?;
    let mut h = linear(p, "input", Var::concat_cols(&[xr, yr])?)?
        .add(pos)?
        .add(level_rows(p, repeat_each(levels, c), w)?)?;

    let by_row = group_index(&geo, batch, |cell| geo.row(cell));
    let by_col = group_index(&geo, batch, |cell| geo.col(cell));
    let by_box = group_index(&geo, batch, |cell| geo.block(cell));
    let groups = batch * n;
    for l in 0..spec.depth {
        let z = h.silu();
        let mixed = linear(p, &format!("block{l}.self"), z)?
            .add(project(p, &format!("block{l}.row"), group_sum(z, &by_row, w, groups)?)?)?
            .add(project(p, &format!("block{l}.col"), group_sum(z, &by_col, w, groups)?)?)?
            .add(project(p, &format!("block{l}.box"), group_sum(z, &by_box, w, groups)?)?)?;
        h = h.add(linear(p, &format!("block{l}.out"), mixed.silu())?)?;
    }
    let o = linear(p, "head", h.silu())?;
    half_sq_norm_per_instance(o, batch)
}
