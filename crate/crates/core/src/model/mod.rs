//! Parameterized energies `E_θ(x, y, k)`.
//!
//! All architectures evaluate a batch at once: `x` is `[B, dx]`, `y` is
//! `[B, dy]`, and one level per row. The result is the `[B]` vector of
//! per-instance energies. Instances never interact, so the gradient of the
//! summed energy with respect to `y` is the stack of per-instance gradients.
//!
//! Parameters are initialized uniformly in `±1/√fan_in` (biases use the fan-in
//! of their layer; level embeddings use fan-in `K + 1`, as a linear map of a
//! one-hot level). Architectures with a tensor output `o` use `E = ½‖o‖²`.

mod board;
mod edge;
mod mlp;
mod plan;
mod quadratic;

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng;
use crate::tensor::Tensor;

pub use board::BoardGeometry;
pub use plan::plan_dims;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Concatenated `(x, y)` through silu hidden layers to a scalar.
    MlpEnergy,
    /// Residual per-cell network with row/column/block aggregation.
    BoardEnergy,
    /// Edge features composed through intermediate nodes (max over `k` of
    /// `f(e_ik, e_kj)`).
    EdgeRelationalEnergy,
    /// Node-per-timestep features with adjacency message passing and
    /// `(t−1, t, t+1)` temporal stacking.
    PlanRelationalEnergy,
    /// `½·s_k·‖y − m_k·(W x + b)‖²`; analytic minimizer, used as a
    /// diagnostic head.
    Quadratic,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Self::MlpEnergy => "mlp_energy",
            Self::BoardEnergy => "board_energy",
            Self::EdgeRelationalEnergy => "edge_relational_energy",
            Self::PlanRelationalEnergy => "plan_relational_energy",
            Self::Quadratic => "quadratic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub width: usize,
    pub depth: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub levels: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ModelSpec(msg));
        if self.width == 0 || self.depth == 0 {
            return fail(format!("width {} and depth {} must be positive", self.width, self.depth));
        }
        if self.levels == 0 {
            return fail("levels must be positive".into());
        }
        if self.x_dim == 0 || self.y_dim == 0 {
            return fail("input and output dimensions must be positive".into());
        }
        match self.arch {
            Architecture::MlpEnergy | Architecture::Quadratic => Ok(()),
            Architecture::BoardEnergy => BoardGeometry::from_dims(self.x_dim, self.y_dim).map(|_| ()),
            Architecture::EdgeRelationalEnergy => edge::node_count(self.x_dim, self.y_dim).map(|_| ()),
            Architecture::PlanRelationalEnergy => plan_dims(self.x_dim, self.y_dim).map(|_| ()),
        }
    }

    /// Parameter count of an `mlp_energy` spec:
    /// `(dx+dy)·w + w + (depth−1)·(w² + w) + (w + 1) + (K+1)·w`.
    pub fn mlp_param_count(&self) -> usize {
        let w = self.width;
        (self.x_dim + self.y_dim) * w + w + (self.depth - 1) * (w * w + w) + w + 1 + (self.levels + 1) * w
    }
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamSet {
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        Self { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.position(name).map(|i| &self.entries[i].1)
    }

    fn position(&self, name: &str) -> Result<usize> {
        if let Some(&i) = self.index.get(name) {
            return Ok(i);
        }
        // after deserialization the index is empty
        self.entries
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.position(name)?;
        let cur = &mut self.entries[i].1;
        if cur.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_param",
                lhs: cur.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *cur = value;
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Parameters of one model registered on a graph.
pub struct Bound<'g> {
    vars: Vec<Var<'g>>,
    index: HashMap<&'g str, usize>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g>> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Parameter vars in [`ParamSet`] order.
    pub fn vars(&self) -> &[Var<'g>] {
        &self.vars
    }
}

pub(crate) struct ParamBuilder {
    rng: ChaCha8Rng,
    entries: Vec<(String, Tensor)>,
    zero: bool,
}

impl ParamBuilder {
    fn new(seed: u64, zero: bool) -> Self {
        Self {
            rng: rng::stream(seed, &[rng::tag::INIT]),
            entries: Vec::new(),
            zero,
        }
    }

    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let u: f64 = self.rng.gen_range(-bound..bound);
                if self.zero {
                    0.0
                } else {
                    u
                }
            })
            .collect();
        self.entries.push((name, Tensor::new(shape.to_vec(), data).expect("shape")));
    }

    pub(crate) fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in);
        self.uniform(format!("{name}.b"), &[fan_out], fan_in);
    }

    /// Weight without bias.
    pub(crate) fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        self.uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in);
    }

    pub(crate) fn embedding(&mut self, name: &str, rows: usize, width: usize) {
        self.uniform(name.to_string(), &[rows, width], rows);
    }

    pub(crate) fn fixed(&mut self, name: &str, value: Tensor) {
        let value = if self.zero { Tensor::zeros(value.shape()) } else { value };
        self.entries.push((name.to_string(), value));
    }

    fn finish(self) -> ParamSet {
        ParamSet::from_entries(self.entries)
    }
}

/// `h·W + b` with `W` stored `[in, out]`.
pub(crate) fn linear<'g>(p: &Bound<'g>, name: &str, h: Var<'g>) -> Result<Var<'g>> {
    h.matmul(p.get(&format!("{name}.w"))?)?.add_row(p.get(&format!("{name}.b"))?)
}

/// `h·W` without bias.
pub(crate) fn project<'g>(p: &Bound<'g>, name: &str, h: Var<'g>) -> Result<Var<'g>> {
    h.matmul(p.get(&format!("{name}.w"))?)
}

/// Rows of the level embedding, one per entry of `rows_levels`.
pub(crate) fn level_rows<'g>(p: &Bound<'g>, rows_levels: Vec<usize>, width: usize) -> Result<Var<'g>> {
    p.get("level_embedding")?.gather_rows(rows_levels.into(), width)
}

/// Per-instance `½‖o‖²` for `o` laid out as `batch` equal contiguous chunks.
pub(crate) fn half_sq_norm_per_instance<'g>(o: Var<'g>, batch: usize) -> Result<Var<'g>> {
    let per = o.numel() / batch.max(1);
    o.square()?.reshape(&[batch, per])?.sum_cols().map(|e| e.scale(0.5))
}

/// Repeat each entry of `levels` `times` times, in order.
pub(crate) fn repeat_each(levels: &[usize], times: usize) -> Vec<usize> {
    levels.iter().flat_map(|&k| std::iter::repeat(k).take(times)).collect()
}

/// Index vector that views `[rows, 1]` values as repeated across `cols`.
pub(crate) fn repeat_cols_index(rows: usize, cols: usize) -> Rc<[usize]> {
    (0..rows * cols).map(|i| i / cols).collect::<Vec<_>>().into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    spec: ModelSpec,
    params: ParamSet,
}

impl EnergyModel {
    /// Randomly initialized model, deterministic in `seed`.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        Self::construct(spec, seed, false)
    }

    /// Model with every parameter zero; its energy is constant.
    pub fn zeroed(spec: ModelSpec) -> Result<Self> {
        Self::construct(spec, 0, true)
    }

    fn construct(spec: ModelSpec, seed: u64, zero: bool) -> Result<Self> {
        spec.validate()?;
        let mut b = ParamBuilder::new(seed, zero);
        match spec.arch {
            Architecture::MlpEnergy => mlp::init(&spec, &mut b),
            Architecture::BoardEnergy => board::init(&spec, &mut b)?,
            Architecture::EdgeRelationalEnergy => edge::init(&spec, &mut b),
            Architecture::PlanRelationalEnergy => plan::init(&spec, &mut b),
            Architecture::Quadratic => quadratic::init(&spec, &mut b),
        }
        Ok(Self {
            spec,
            params: b.finish(),
        })
    }

    /// Reassemble a model from stored parameters, checking names and shapes
    /// against a fresh build of `spec`.
    pub fn from_parts(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        let reference = Self::zeroed(spec.clone())?;
        if reference.params.len() != params.len() {
            return Err(Error::ModelSpec(format!(
                "expected {} parameter tensors, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for ((rn, rt), (n, t)) in reference.params.entries().iter().zip(params.entries()) {
            if rn != n || rt.shape() != t.shape() {
                return Err(Error::ModelSpec(format!(
                    "parameter {n} {:?} does not match expected {rn} {:?}",
                    t.shape(),
                    rt.shape()
                )));
            }
        }
        Ok(Self {
            spec,
            params: ParamSet::from_entries(params.entries),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.params.set(name, value)
    }

    pub fn levels(&self) -> usize {
        self.spec.levels
    }

    /// Register parameters on `g`; `trainable` decides whether they receive
    /// gradients.
    pub fn bind<'g>(&'g self, g: &'g Graph, trainable: bool) -> Bound<'g> {
        let vars = self
            .params
            .tensors()
            .map(|t| if trainable { g.var(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let index = self.params.names().enumerate().map(|(i, n)| (n, i)).collect();
        Bound { vars, index }
    }

    fn check_batch(&self, x: &Var<'_>, y: &Var<'_>, levels: &[usize]) -> Result<usize> {
        let (bx, dx) = x.value().dims2()?;
        let (by, dy) = y.value().dims2()?;
        if bx != by || bx != levels.len() {
            return Err(Error::ShapeMismatch {
                op: "energy batch",
                lhs: vec![bx, by],
                rhs: vec![levels.len()],
            });
        }
        if let Some(&k) = levels.iter().find(|&&k| k > self.spec.levels) {
            return Err(Error::Level {
                level: k,
                max: self.spec.levels,
            });
        }
        let fixed = matches!(
            self.spec.arch,
            Architecture::MlpEnergy | Architecture::Quadratic | Architecture::BoardEnergy
        );
        if fixed && (dx != self.spec.x_dim || dy != self.spec.y_dim) {
            return Err(Error::ShapeMismatch {
                op: "energy input",
                lhs: vec![dx, dy],
                rhs: vec![self.spec.x_dim, self.spec.y_dim],
            });
        }
        Ok(bx)
    }

    /// Per-instance energies `[B]` for `x: [B, dx]`, `y: [B, dy]`.
    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>, y: Var<'g>, levels: &[usize]) -> Result<Var<'g>> {
        let batch = self.check_batch(&x, &y, levels)?;
        let s = &self.spec;
        match s.arch {
            Architecture::MlpEnergy => mlp::forward(s, p, x, y, levels),
            Architecture::BoardEnergy => board::forward(s, p, x, y, levels, batch),
            Architecture::EdgeRelationalEnergy => edge::forward(s, p, x, y, levels, batch),
            Architecture::PlanRelationalEnergy => plan::forward(s, p, x, y, levels, batch),
            Architecture::Quadratic => quadratic::forward(s, p, x, y, levels, batch),
        }
    }

    /// Energies and `∇_y` of their sum, both recorded on the graph. The
    /// gradient stays differentiable with respect to the parameters.
    pub fn energy_and_grad_y<'g>(
        &self,
        p: &Bound<'g>,
        x: Var<'g>,
        y: Var<'g>,
        levels: &[usize],
    ) -> Result<(Var<'g>, Var<'g>)> {
        let e = self.forward(p, x, y, levels)?;
        let g = x.graph().grad(e.sum(), &[y])?[0];
        Ok((e, g))
    }

    /// Batched energies for plain tensors.
    pub fn energies(&self, x: &Tensor, y: &Tensor, levels: &[usize]) -> Result<Vec<f64>> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        let e = self.forward(&p, g.constant(x.clone()), g.constant(y.clone()), levels)?;
        Ok(e.value().data().to_vec())
    }

    /// Batched energies and `∇_y` for plain tensors.
    pub fn energies_and_grad(&self, x: &Tensor, y: &Tensor, levels: &[usize]) -> Result<(Vec<f64>, Tensor)> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        let yv = g.var(y.clone());
        let (e, gy) = self.energy_and_grad_y(&p, g.constant(x.clone()), yv, levels)?;
        let energies = e.value().data().to_vec();
        Ok((energies, gy.tensor()))
    }

    /// Scalar energy of a single instance (`x`, `y` flat vectors).
    pub fn eval(&self, x: &Tensor, y: &Tensor, k: usize) -> Result<f64> {
        let (xb, yb) = (as_row(x)?, as_row(y)?);
        Ok(self.energies(&xb, &yb, &[k])?[0])
    }

    /// `∇_y E(x, y, k)` of a single instance, in `y`'s shape.
    pub fn gradient_y(&self, x: &Tensor, y: &Tensor, k: usize) -> Result<Tensor> {
        let (xb, yb) = (as_row(x)?, as_row(y)?);
        let (_, g) = self.energies_and_grad(&xb, &yb, &[k])?;
        g.reshape(y.shape())
    }
}

fn as_row(t: &Tensor) -> Result<Tensor> {
    t.reshape(&[1, t.numel()])
}

#[cfg(test)]
mod tests;
