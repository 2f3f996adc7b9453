//! Finite-difference gradient checks and random expression programs to run
//! them on.

use std::rc::Rc;

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::rng::{normal_vec, stream};
use crate::tensor::Tensor;

/// Central difference `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every `i`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both norms
/// are below `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize),
    Offset(usize),
    Sigmoid(usize),
    Tanh(usize),
    Silu(usize),
    Softplus(usize),
    /// Right-multiply by the weight input.
    MatMul(usize),
    /// Gather rows with a fixed permutation with repeats.
    Gather(usize),
    /// Row sums broadcast back across the columns.
    RowSum(usize),
}

/// A random straight-line program over `[rows, cols]` tensors plus one
/// `[cols, cols]` weight, reduced to a scalar with a weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProgram {
    pub rows: usize,
    pub cols: usize,
    pub inputs: usize,
    pub instrs: Vec<Instr>,
    pub constants: Vec<f64>,
}

impl RandomProgram {
    pub fn generate(seed: u64, len: usize) -> Self {
        let mut rng = stream(seed, &[0x6772_6164]);
        let rows = rng.gen_range(1..=3);
        let cols = rng.gen_range(1..=3);
        let inputs = rng.gen_range(1..=3);
        let mut instrs = Vec::with_capacity(len);
        let mut constants = Vec::with_capacity(len);
        for i in 0..len {
            let live = inputs + i;
            let a = rng.gen_range(0..live);
            let b = rng.gen_range(0..live);
            instrs.push(match rng.gen_range(0..13) {
                0 => Instr::Add(a, b),
                1 => Instr::Sub(a, b),
                2 => Instr::Mul(a, b),
                3 => Instr::Neg(a),
                4 => Instr::Scale(a),
                5 => Instr::Offset(a),
                6 => Instr::Sigmoid(a),
                7 => Instr::Tanh(a),
                8 => Instr::Silu(a),
                9 => Instr::Softplus(a),
                10 => Instr::MatMul(a),
                11 => Instr::Gather(a),
                _ => Instr::RowSum(a),
            });
            constants.push(rng.gen_range(-1.5..1.5));
        }
        Self {
            rows,
            cols,
            inputs,
            instrs,
            constants,
        }
    }

    /// Flat length of all inputs: the data tensors, then the weight.
    pub fn input_len(&self) -> usize {
        self.inputs * self.rows * self.cols + self.cols * self.cols
    }

    pub fn random_input(&self, seed: u64) -> Vec<f64> {
        normal_vec(&mut stream(seed, &[0x696e_7075]), self.input_len())
    }

    /// Record the program; returns the input leaves and the scalar output.
    pub fn record<'g>(&self, g: &'g Graph, flat: &[f64]) -> Result<(Vec<Var<'g>>, Var<'g>)> {
        let n = self.rows * self.cols;
        let mut leaves = Vec::with_capacity(self.inputs + 1);
        for i in 0..self.inputs {
            leaves.push(g.var(Tensor::new(vec![self.rows, self.cols], flat[i * n..(i + 1) * n].to_vec())?));
        }
        let w = g.var(Tensor::new(vec![self.cols, self.cols], flat[self.inputs * n..].to_vec())?);
        leaves.push(w);
        let out = self.apply(g, &leaves[..self.inputs], w)?;
        Ok((leaves, out))
    }

    pub fn apply<'g>(&self, g: &'g Graph, inputs: &[Var<'g>], w: Var<'g>) -> Result<Var<'g>> {
        let perm: Rc<[usize]> = (0..self.rows).map(|r| (r * 2 + 1) % self.rows).collect::<Vec<_>>().into();
        let mut vals: Vec<Var<'g>> = inputs.to_vec();
        for (ins, &c) in self.instrs.iter().zip(&self.constants) {
            let v = match *ins {
                Instr::Add(a, b) => vals[a].add(vals[b])?,
                Instr::Sub(a, b) => vals[a].sub(vals[b])?,
                // keep products bounded
                Instr::Mul(a, b) => vals[a].tanh().mul(vals[b])?,
                Instr::Neg(a) => vals[a].neg(),
                Instr::Scale(a) => vals[a].scale(c),
                Instr::Offset(a) => vals[a].offset(c),
                Instr::Sigmoid(a) => vals[a].sigmoid(),
                Instr::Tanh(a) => vals[a].tanh(),
                Instr::Silu(a) => vals[a].silu(),
                Instr::Softplus(a) => vals[a].softplus(),
                Instr::MatMul(a) => vals[a].matmul(w)?.scale(0.5),
                Instr::Gather(a) => vals[a].gather_rows(Rc::clone(&perm), self.cols)?,
                Instr::RowSum(a) => vals[a].sum_cols()?.reshape(&[self.rows, 1])?.matmul(g.constant(Tensor::ones(&[1, self.cols])))?,
            };
            vals.push(v);
        }
        let last = *vals.last().expect("at least one input");
        let weights: Vec<f64> = (0..self.rows * self.cols).map(|i| 1.0 + 0.25 * i as f64).collect();
        last.mul(g.constant(Tensor::new(vec![self.rows, self.cols], weights)?))
            .map(|v| v.sum())
    }

    pub fn eval(&self, flat: &[f64]) -> Result<f64> {
        let g = Graph::new();
        let (_, out) = self.record(&g, flat)?;
        out.item()
    }

    /// Reverse-mode gradient with respect to all inputs, flattened.
    pub fn gradient(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let g = Graph::new();
        let (leaves, out) = self.record(&g, flat)?;
        let grads = g.grad(out, &leaves)?;
        Ok(grads.iter().flat_map(|v| v.tensor().into_data()).collect())
    }

    /// `∂/∂x ‖∇f(x)‖²`, differentiating through the recorded gradient.
    pub fn gradient_norm_gradient(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let g = Graph::new();
        let (leaves, out) = self.record(&g, flat)?;
        let grads = g.grad(out, &leaves)?;
        let mut total = g.scalar(0.0);
        for v in &grads {
            total = total.add(v.sq_l2())?;
        }
        let second = g.grad(total, &leaves)?;
        Ok(second.iter().flat_map(|v| v.tensor().into_data()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_a_cubic() {
        let g = numeric_gradient(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 5.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0], 1e-12), 0.0);
    }

    #[test]
    fn programs_are_deterministic() {
        assert_eq!(RandomProgram::generate(4, 8), RandomProgram::generate(4, 8));
        let p = RandomProgram::generate(4, 8);
        let x = p.random_input(1);
        assert_eq!(p.eval(&x).unwrap(), p.eval(&x).unwrap());
    }
}
