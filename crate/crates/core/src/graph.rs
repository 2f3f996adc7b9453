//! Reverse-mode differentiation over a recorded computation.
//!
//! A [`Graph`] is an append-only tape of nodes. Every operation on a [`Var`]
//! computes its value eagerly and records the operation together with its
//! parents. [`Graph::grad`] walks the tape backwards, and it builds the adjoint
//! computation out of ordinary recorded operations. The returned gradients are
//! therefore themselves differentiable, which is what the training loss needs:
//! it contains `∇_y E` and is differentiated again with respect to the
//! parameters.
//!
//! Node ids are assigned in creation order, so parents always precede their
//! children and the tape is its own topological order.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    /// `n`-th derivative of the logistic function.
    SigmoidD(usize, u8),
    Tanh(usize),
    /// `n`-th derivative of `x·σ(x)`.
    SiluD(usize, u8),
    Softplus(usize),
    Sum(usize),
    Broadcast(usize),
    Reshape(usize),
    Gather { src: usize, index: Rc<[usize]>, width: usize },
    ScatterAdd { src: usize, index: Rc<[usize]>, width: usize },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(_) => "offset",
            Op::MatMul { .. } => "matmul",
            Op::SigmoidD(..) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::SiluD(..) => "silu",
            Op::Softplus(_) => "softplus",
            Op::Sum(_) => "sum",
            Op::Broadcast(_) => "broadcast",
            Op::Reshape(_) => "reshape",
            Op::Gather { .. } => "gather",
            Op::ScatterAdd { .. } => "scatter_add",
        }
    }

    fn parents(&self) -> [Option<usize>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul { a, b, .. } => [Some(a), Some(b)],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::SigmoidD(a, _)
            | Op::Tanh(a)
            | Op::SiluD(a, _)
            | Op::Softplus(a)
            | Op::Sum(a)
            | Op::Broadcast(a)
            | Op::Reshape(a)
            | Op::Gather { src: a, .. }
            | Op::ScatterAdd { src: a, .. } => [Some(a), None],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    tracked: bool,
}

/// Tape of differentiation nodes for one forward evaluation.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    /// `σ` of node values, shared by every activation derivative of a node.
    logistic: RefCell<HashMap<usize, Rc<Tensor>>>,
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("op", &self.graph.nodes.borrow()[self.id].op.tag())
            .field("shape", &self.shape())
            .finish()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Coefficients, in ascending powers of `s = σ(x)`, of `σ⁽ⁿ⁾` written as a
/// polynomial in `s`. Uses `d/dx P(s) = P'(s)·(s − s²)`.
fn sigmoid_poly(n: u8) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..n {
        let mut q = vec![0.0; p.len() + 1];
        for (i, &c) in p.iter().enumerate().skip(1) {
            let d = i as f64 * c;
            q[i] += d;
            q[i + 1] -= d;
        }
        p = q;
    }
    p
}

fn horner(p: &[f64], s: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// `ln(1 + eˣ)` without overflow for large `x` or loss of precision for very
/// negative `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A differentiable leaf.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn logistic_of(&self, id: usize) -> Rc<Tensor> {
        if let Some(s) = self.logistic.borrow().get(&id) {
            return Rc::clone(s);
        }
        let s = Rc::new(self.value(id).map(sigmoid));
        self.logistic.borrow_mut().insert(id, Rc::clone(&s));
        s
    }

    fn tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    /// Exact reverse-mode gradients of the scalar `output` with respect to each
    /// of `wrt`.
    ///
    /// Gradients are recorded on this graph, so they can be differentiated
    /// again. A `wrt` entry that `output` does not depend on (including any
    /// constant) gets a zero tensor of its shape.
    pub fn grad<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>]) -> Result<Vec<Var<'g>>> {
        let out_shape = output.shape();
        if out_shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarOutput(out_shape));
        }
        let n = output.id + 1;

        // Nodes whose value depends on some tracked `wrt` entry.
        let mut depends = vec![false; n];
        for w in wrt {
            if w.id < n && self.tracked(w.id) {
                depends[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..n {
                if depends[i] || !nodes[i].tracked {
                    continue;
                }
                depends[i] = nodes[i].op.parents().iter().flatten().any(|&p| depends[p]);
            }
        }

        let mut adjoint: Vec<Option<Var<'g>>> = vec![None; n];
        if depends[output.id] {
            adjoint[output.id] = Some(self.constant(Tensor::ones(&output.value().shape().to_vec())));
        }
        for i in (0..n).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            if matches!(op, Op::Leaf) {
                continue;
            }
            for (parent, contrib) in self.backward(i, &op, g, &depends)? {
                adjoint[parent] = Some(match adjoint[parent] {
                    Some(acc) => acc.add(contrib)?,
                    None => contrib,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| match adjoint.get(w.id).copied().flatten() {
                Some(g) if depends[w.id] => g,
                _ => self.constant(Tensor::zeros(w.value().shape())),
            })
            .collect())
    }

    /// Adjoint contributions to the parents of node `id` given its adjoint `g`.
    fn backward<'g>(&'g self, id: usize, op: &Op, g: Var<'g>, depends: &[bool]) -> Result<Vec<(usize, Var<'g>)>> {
        let v = |i: usize| Var { graph: self, id: i };
        let need = |i: usize| depends[i];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if need(a) {
                    out.push((a, g.reduce_like(v(a))?));
                }
                if need(b) {
                    out.push((b, g.reduce_like(v(b))?));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    out.push((a, g.reduce_like(v(a))?));
                }
                if need(b) {
                    out.push((b, g.neg().reduce_like(v(b))?));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    out.push((a, g.mul(v(b))?.reduce_like(v(a))?));
                }
                if need(b) {
                    out.push((b, g.mul(v(a))?.reduce_like(v(b))?));
                }
            }
            Op::Neg(a) => out.push((a, g.neg())),
            Op::Scale(a, c) => out.push((a, g.scale(c))),
            Op::Offset(a) => out.push((a, g)),
            Op::MatMul { a, b, ta, tb } => {
                if need(a) {
                    let ga = if ta { v(b).matmul_t(g, tb, true)? } else { g.matmul_t(v(b), false, !tb)? };
                    out.push((a, ga));
                }
                if need(b) {
                    let gb = if tb { g.matmul_t(v(a), true, ta)? } else { v(a).matmul_t(g, !ta, false)? };
                    out.push((b, gb));
                }
            }
            Op::SigmoidD(a, n) => out.push((a, g.mul(v(a).sigmoid_derivative(n + 1))?)),
            Op::Tanh(a) => {
                let t = v(id);
                out.push((a, g.sub(g.mul(t.mul(t)?)?)?));
            }
            Op::SiluD(a, n) => out.push((a, g.mul(v(a).silu_derivative(n + 1))?)),
            Op::Softplus(a) => out.push((a, g.mul(v(a).sigmoid())?)),
            Op::Sum(a) => out.push((a, g.broadcast_to(&v(a).shape())?)),
            Op::Broadcast(a) => out.push((a, g.sum().reshape(&v(a).shape())?)),
            Op::Reshape(a) => out.push((a, g.reshape(&v(a).shape())?)),
            Op::Gather { src, ref index, width } => {
                let s = v(src);
                let rows = s.numel() / width.max(1);
                let ga = g.scatter_add_rows(Rc::clone(index), width, rows)?.reshape(&s.shape())?;
                out.push((src, ga));
            }
            Op::ScatterAdd { src, ref index, width } => {
                let s = v(src);
                let ga = g.gather_rows(Rc::clone(index), width)?.reshape(&s.shape())?;
                out.push((src, ga));
            }
        }
        Ok(out)
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(self.id)
    }

    /// Owned copy of the current value.
    pub fn tensor(&self) -> Tensor {
        (*self.value()).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.graph.nodes.borrow()[self.id].value.numel()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.graph.tracked(self.id)
    }

    /// Same value, detached from the differentiation record.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.tensor())
    }

    fn unary(&self, op: Op, value: Tensor) -> Var<'g> {
        let tracked = self.is_tracked();
        self.graph.push(value, op, tracked)
    }

    fn binary(&self, other: Var<'g>, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let value = if a.shape() == b.shape() {
            a.zip_map(&b, name, f)?
        } else if b.numel() == 1 {
            let s = b.data()[0];
            a.map(|x| f(x, s))
        } else if a.numel() == 1 {
            let s = a.data()[0];
            b.map(|x| f(s, x))
        } else {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        };
        let op = match name {
            "add" => Op::Add(self.id, other.id),
            "sub" => Op::Sub(self.id, other.id),
            _ => Op::Mul(self.id, other.id),
        };
        let tracked = self.is_tracked() || other.is_tracked();
        Ok(self.graph.push(value, op, tracked))
    }

    /// Elementwise sum; a one-element operand broadcasts.
    pub fn add(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", |a, b| a * b)
    }

    pub fn neg(&self) -> Var<'g> {
        self.unary(Op::Neg(self.id), self.value().map(|x| -x))
    }

    pub fn scale(&self, c: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, c), self.value().scale(c))
    }

    /// `self + c` elementwise.
    pub fn offset(&self, c: f64) -> Var<'g> {
        self.unary(Op::Offset(self.id), self.value().map(|x| x + c))
    }

    pub fn sigmoid(&self) -> Var<'g> {
        self.sigmoid_derivative(0)
    }

    /// `σ⁽ⁿ⁾(x)`, evaluated in closed form.
    pub fn sigmoid_derivative(&self, n: u8) -> Var<'g> {
        let p = sigmoid_poly(n);
        let s = self.graph.logistic_of(self.id);
        self.unary(Op::SigmoidD(self.id, n), s.map(|v| horner(&p, v)))
    }

    pub fn tanh(&self) -> Var<'g> {
        self.unary(Op::Tanh(self.id), self.value().map(f64::tanh))
    }

    /// `x·σ(x)`.
    pub fn silu(&self) -> Var<'g> {
        self.silu_derivative(0)
    }

    /// `n`-th derivative of `x·σ(x)`, which is `x·σ⁽ⁿ⁾ + n·σ⁽ⁿ⁻¹⁾`.
    pub fn silu_derivative(&self, n: u8) -> Var<'g> {
        let p = sigmoid_poly(n);
        let s = self.graph.logistic_of(self.id);
        let x = self.value();
        let data: Vec<f64> = if n == 0 {
            x.data().iter().zip(s.data()).map(|(x, s)| x * s).collect()
        } else {
            let q = sigmoid_poly(n - 1);
            let c = f64::from(n);
            x.data().iter().zip(s.data()).map(|(x, &s)| x * horner(&p, s) + c * horner(&q, s)).collect()
        };
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.unary(Op::SiluD(self.id, n), value)
    }

    pub fn softplus(&self) -> Var<'g> {
        self.unary(Op::Softplus(self.id), self.value().map(softplus))
    }

    pub fn square(&self) -> Result<Var<'g>> {
        self.mul(*self)
    }

    /// Sum of all entries as a rank-0 tensor; the empty sum is 0.
    pub fn sum(&self) -> Var<'g> {
        self.unary(Op::Sum(self.id), Tensor::scalar(self.value().sum()))
    }

    /// Mean of all entries; the empty mean is 0.
    pub fn mean(&self) -> Var<'g> {
        let n = self.numel();
        self.sum().scale(if n == 0 { 0.0 } else { 1.0 / n as f64 })
    }

    /// Σ aᵢ².
    pub fn sq_l2(&self) -> Var<'g> {
        self.mul(*self).expect("equal shapes").sum()
    }

    /// Repeat a one-element tensor to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Var<'g>> {
        let v = self.value();
        if v.numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast",
                lhs: v.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(self.unary(Op::Broadcast(self.id), Tensor::full(shape, v.data()[0])))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        let v = self.value();
        if v.shape() == shape {
            return Ok(*self);
        }
        let t = v.reshape(shape).map_err(|_| Error::ShapeMismatch {
            op: "reshape",
            lhs: v.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        Ok(self.unary(Op::Reshape(self.id), t))
    }

    /// Matrix product of rank-2 operands.
    pub fn matmul(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self)·op(other)` where `ta`/`tb` transpose the stored matrices.
    pub fn matmul_t(&self, other: Var<'g>, ta: bool, tb: bool) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let rank_err = |t: &Tensor| Error::Rank {
            op: "matmul",
            expected: 2,
            shape: t.shape().to_vec(),
        };
        let (ar, ac) = a.dims2().map_err(|_| rank_err(&a))?;
        let (br, bc) = b.dims2().map_err(|_| rank_err(&b))?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = gemm(a.data(), b.data(), m, k, n, ta, tb);
        let tracked = self.is_tracked() || other.is_tracked();
        Ok(self.graph.push(
            Tensor::new(vec![m, n], data)?,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
            tracked,
        ))
    }

    /// View `self` as rows of `width` values and select `index` rows,
    /// producing `[index.len(), width]`.
    pub fn gather_rows(&self, index: Rc<[usize]>, width: usize) -> Result<Var<'g>> {
        let v = self.value();
        let rows = if width == 0 { 0 } else { v.numel() / width };
        if width * rows != v.numel() {
            return Err(Error::ShapeMismatch {
                op: "gather",
                lhs: v.shape().to_vec(),
                rhs: vec![width],
            });
        }
        let src = v.data();
        let mut data = Vec::with_capacity(index.len() * width);
        for &r in index.iter() {
            if r >= rows {
                return Err(Error::IndexOutOfRange { index: r, len: rows });
            }
            data.extend_from_slice(&src[r * width..(r + 1) * width]);
        }
        let t = Tensor::new(vec![index.len(), width], data)?;
        Ok(self.unary(
            Op::Gather {
                src: self.id,
                index,
                width,
            },
            t,
        ))
    }

    /// Adjoint of [`gather_rows`](Self::gather_rows): row `i` of `self` is
    /// added into output row `index[i]` of a `[rows, width]` result.
    pub fn scatter_add_rows(&self, index: Rc<[usize]>, width: usize, rows: usize) -> Result<Var<'g>> {
        let v = self.value();
        if v.numel() != index.len() * width {
            return Err(Error::ShapeMismatch {
                op: "scatter_add",
                lhs: v.shape().to_vec(),
                rhs: vec![index.len(), width],
            });
        }
        let src = v.data();
        let mut data = vec![0.0; rows * width];
        for (i, &r) in index.iter().enumerate() {
            if r >= rows {
                return Err(Error::IndexOutOfRange { index: r, len: rows });
            }
            let dst = &mut data[r * width..(r + 1) * width];
            for (d, s) in dst.iter_mut().zip(&src[i * width..(i + 1) * width]) {
                *d += s;
            }
        }
        let t = Tensor::new(vec![rows, width], data)?;
        Ok(self.unary(
            Op::ScatterAdd {
                src: self.id,
                index,
                width,
            },
            t,
        ))
    }

    /// Sum `other` into `self`'s shape when `self` is broadcast against a
    /// one-element tensor; identity otherwise.
    fn reduce_like(&self, target: Var<'g>) -> Result<Var<'g>> {
        let shape = target.shape();
        if self.shape() == shape {
            Ok(*self)
        } else {
            self.sum().reshape(&shape)
        }
    }

    // --- composite helpers -------------------------------------------------

    /// Add a `[d]` or `[1, d]` row to every row of a `[n, d]` matrix.
    pub fn add_row(&self, row: Var<'g>) -> Result<Var<'g>> {
        let (n, d) = self.value().dims2()?;
        if row.numel() != d {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: row.shape(),
            });
        }
        let index: Rc<[usize]> = vec![0; n].into();
        self.add(row.gather_rows(index, d)?)
    }

    /// Column sums of a `[n, d]` matrix, as `[d]`.
    pub fn sum_rows(&self) -> Result<Var<'g>> {
        let (n, d) = self.value().dims2()?;
        let index: Rc<[usize]> = vec![0; n].into();
        self.scatter_add_rows(index, d, 1)?.reshape(&[d])
    }

    /// Row sums of a `[n, d]` matrix, as `[n]`.
    pub fn sum_cols(&self) -> Result<Var<'g>> {
        let (n, d) = self.value().dims2()?;
        let index: Rc<[usize]> = (0..n * d).map(|i| i / d).collect::<Vec<_>>().into();
        self.scatter_add_rows(index, 1, n)?.reshape(&[n])
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Var<'g>> {
        let (r, c) = self.value().dims2()?;
        let index: Rc<[usize]> = (0..r * c).map(|i| (i % r) * c + i / r).collect::<Vec<_>>().into();
        self.gather_rows(index, 1)?.reshape(&[c, r])
    }

    /// Concatenate rank-2 operands with equal row counts along columns.
    pub fn concat_cols(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let first = parts.first().ok_or(Error::ShapeMismatch {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?;
        let dims = parts.iter().map(|p| p.value().dims2()).collect::<Result<Vec<_>>>()?;
        let rows = dims[0].0;
        if let Some(p) = parts.iter().zip(&dims).find(|(_, d)| d.0 != rows) {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape(),
                rhs: p.0.shape(),
            });
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut acc: Option<Var<'g>> = None;
        let mut offset = 0;
        for (p, &(_, c)) in parts.iter().zip(&dims) {
            let index: Rc<[usize]> = (0..rows * c)
                .map(|i| (i / c) * total + offset + i % c)
                .collect::<Vec<_>>()
                .into();
            let placed = p.reshape(&[rows * c])?.scatter_add_rows(index, 1, rows * total)?;
            acc = Some(match acc {
                Some(a) => a.add(placed)?,
                None => placed,
            });
            offset += c;
        }
        acc.expect("nonempty").reshape(&[rows, total])
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<'g>> {
        let (r, c) = self.value().dims2()?;
        if start + len > c {
            return Err(Error::IndexOutOfRange { index: start + len, len: c });
        }
        let index: Rc<[usize]> = (0..r * len).map(|i| (i / len) * c + start + i % len).collect::<Vec<_>>().into();
        self.gather_rows(index, 1)?.reshape(&[r, len])
    }

    /// Maximum over groups of entries. `groups[i]` lists flat indices of
    /// `self` whose maximum becomes output entry `i`; ties resolve to the first
    /// listed index. The gradient routes to the selected entry.
    pub fn max_groups(&self, groups: &[Vec<usize>], out_shape: &[usize]) -> Result<Var<'g>> {
        let v = self.value();
        let data = v.data();
        let mut picks = Vec::with_capacity(groups.len());
        for grp in groups {
            let mut best = *grp.first().ok_or(Error::IndexOutOfRange { index: 0, len: 0 })?;
            for &j in grp {
                if data[j] > data[best] {
                    best = j;
                }
            }
            picks.push(best);
        }
        let flat = self.reshape(&[v.numel()])?;
        flat.gather_rows(picks.into(), 1)?.reshape(out_shape)
    }

    /// View `self` as `[outer, mid, inner]` and take the maximum over the
    /// middle axis, giving `[outer, inner]`. Ties resolve to the lowest index.
    pub fn max_middle(&self, outer: usize, mid: usize, inner: usize) -> Result<Var<'g>> {
        let v = self.value();
        if outer * mid * inner != v.numel() || mid == 0 {
            return Err(Error::ShapeMismatch {
                op: "max_middle",
                lhs: v.shape().to_vec(),
                rhs: vec![outer, mid, inner],
            });
        }
        let data = v.data();
        let mut picks: Vec<usize> = Vec::with_capacity(outer * inner);
        let mut best = vec![0.0; inner];
        for o in 0..outer {
            let base = o * mid * inner;
            let start = picks.len();
            picks.extend(base..base + inner);
            best.copy_from_slice(&data[base..base + inner]);
            for m in 1..mid {
                let off = base + m * inner;
                for i in 0..inner {
                    let val = data[off + i];
                    if val > best[i] {
                        best[i] = val;
                        picks[start + i] = off + i;
                    }
                }
            }
        }
        let flat = self.reshape(&[v.numel()])?;
        flat.gather_rows(picks.into(), 1)?.reshape(&[outer, inner])
    }
}
