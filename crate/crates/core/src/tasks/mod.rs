//! Task generators, validity oracles and metrics.
//!
//! Every instance draws from its own substream keyed by `(seed, index)`, so a
//! dataset can be generated in any order and still match.

pub mod graph;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod sudoku;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Task family plus the sizes that fix the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskKind {
    Addition { n: usize },
    Completion { n: usize, rank: usize },
    Inverse { n: usize },
    Sudoku { order: usize },
    Connectivity { nodes: usize },
    ShortestPath { nodes: usize, horizon: usize },
}

/// How the output vector is structured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Continuous,
    /// Independent 0/1 entries.
    Binary,
    /// Consecutive groups of `classes` entries, each one-hot.
    OneHot { classes: usize },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Addition { .. } => "addition",
            TaskKind::Completion { .. } => "completion",
            TaskKind::Inverse { .. } => "inverse",
            TaskKind::Sudoku { .. } => "sudoku",
            TaskKind::Connectivity { .. } => "connectivity",
            TaskKind::ShortestPath { .. } => "shortest_path",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Task(m));
        match *self {
            TaskKind::Addition { n } | TaskKind::Inverse { n } if n == 0 => bad("matrix size must be >= 1".into()),
            TaskKind::Completion { n, rank } if n == 0 || rank == 0 || rank > n => {
                bad(format!("completion needs 1 <= rank <= n, got rank {rank}, n {n}"))
            }
            TaskKind::Sudoku { order } if !(2..=3).contains(&order) => bad(format!("sudoku order must be 2 or 3, got {order}")),
            TaskKind::Connectivity { nodes } if nodes < 2 => bad("connectivity needs >= 2 nodes".into()),
            TaskKind::ShortestPath { nodes, horizon } if nodes < 2 || horizon < 2 => {
                bad("shortest path needs >= 2 nodes and horizon >= 2".into())
            }
            _ => Ok(()),
        }
    }

    pub fn x_dim(&self) -> usize {
        match *self {
            TaskKind::Addition { n } => 2 * n * n,
            TaskKind::Completion { n, .. } => 2 * n * n,
            TaskKind::Inverse { n } => n * n,
            TaskKind::Sudoku { order } => {
                let side = order * order;
                side * side * (side + 1)
            }
            TaskKind::Connectivity { nodes } => nodes * nodes,
            TaskKind::ShortestPath { nodes, .. } => nodes * nodes + 2 * nodes,
        }
    }

    pub fn y_dim(&self) -> usize {
        match *self {
            TaskKind::Addition { n } | TaskKind::Completion { n, .. } | TaskKind::Inverse { n } => n * n,
            TaskKind::Sudoku { order } => {
                let side = order * order;
                side * side * side
            }
            TaskKind::Connectivity { nodes } => nodes * nodes,
            TaskKind::ShortestPath { nodes, horizon } => nodes * horizon,
        }
    }

    pub fn output(&self) -> OutputKind {
        match *self {
            TaskKind::Addition { .. } | TaskKind::Completion { .. } | TaskKind::Inverse { .. } => OutputKind::Continuous,
            TaskKind::Sudoku { order } => OutputKind::OneHot { classes: order * order },
            TaskKind::Connectivity { .. } => OutputKind::Binary,
            TaskKind::ShortestPath { nodes, .. } => OutputKind::OneHot { classes: nodes },
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.output() == OutputKind::Continuous
    }

    /// Whether larger metric values are better.
    pub fn higher_is_better(&self) -> bool {
        !self.is_continuous()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Standard,
    Harder,
}

impl Difficulty {
    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Standard => "standard",
            Difficulty::Harder => "harder",
        }
    }
}

/// Task-specific side information kept with an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Meta {
    None,
    Completion { mask: Vec<u8> },
    Sudoku { givens: Vec<u8> },
    Connectivity { coords: Vec<[f64; 2]> },
    ShortestPath { start: usize, goal: usize, dist: Vec<Vec<Option<u32>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub kind: TaskKind,
    pub difficulty: Difficulty,
    pub x: Tensor,
    pub y_star: Tensor,
    pub meta: Meta,
}

impl ProblemInstance {
    /// Exact check that `y_star` solves `x`.
    pub fn is_valid(&self) -> bool {
        match self.kind {
            TaskKind::Addition { n } => matrix::addition_valid(n, &self.x, &self.y_star),
            TaskKind::Completion { n, .. } => matrix::completion_valid(n, &self.x, &self.y_star),
            TaskKind::Inverse { n } => matrix::inverse_valid(n, &self.x, &self.y_star, 1e-8),
            TaskKind::Sudoku { order } => sudoku::solution_consistent(order, &self.x, &self.y_star),
            TaskKind::Connectivity { nodes } => graph::connectivity_valid(nodes, &self.x, &self.y_star),
            TaskKind::ShortestPath { nodes, horizon } => {
                graph::path_valid(nodes, horizon, &self.x, &self.y_star)
            }
        }
    }
}

/// Standard and harder generator settings for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitParams {
    pub kind: TaskKind,
    /// Magnitude, condition number, or scale factor depending on the task.
    #[serde(default = "one")]
    pub scale: f64,
    /// Inclusive range of Sudoku givens.
    #[serde(default)]
    pub givens: Option<(usize, usize)>,
    /// Fraction of masked completion entries.
    #[serde(default = "half")]
    pub mask_frac: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl SplitParams {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            scale: 1.0,
            givens: None,
            mask_frac: 0.5,
        }
    }

    /// Desk defaults for `kind` at `difficulty`.
    pub fn desk(kind: TaskKind, difficulty: Difficulty) -> Self {
        let hard = difficulty == Difficulty::Harder;
        let mut p = Self::new(kind);
        match kind {
            TaskKind::Addition { .. } => p.scale = if hard { 2.0 } else { 1.0 },
            TaskKind::Completion { .. } => p.scale = if hard { 1.5 } else { 1.0 },
            TaskKind::Inverse { .. } => p.scale = if hard { 16.0 } else { 4.0 },
            TaskKind::Sudoku { order } => {
                p.givens = Some(match (order, hard) {
                    (2, false) => (8, 12),
                    (2, true) => (5, 8),
                    (_, false) => (31, 42),
                    (_, true) => (17, 34),
                })
            }
            TaskKind::Connectivity { .. } => {
                if hard {
                    p.kind = TaskKind::Connectivity { nodes: 12 };
                }
            }
            TaskKind::ShortestPath { .. } => {
                if hard {
                    p.kind = TaskKind::ShortestPath { nodes: 12, horizon: 12 };
                }
            }
        }
        p
    }
}

/// `count` instances from the generator selected by `params`.
pub fn generate(params: &SplitParams, difficulty: Difficulty, count: usize, seed: u64) -> Result<Vec<ProblemInstance>> {
    params.kind.validate()?;
    let mut out = match params.kind {
        TaskKind::Addition { n } => matrix::gen_addition(n, params.scale, count, seed)?,
        TaskKind::Completion { n, rank } => matrix::gen_completion(n, rank, params.mask_frac, params.scale, count, seed)?,
        TaskKind::Inverse { n } => matrix::gen_inverse(n, params.scale, count, seed)?,
        TaskKind::Sudoku { order } => {
            let range = params
                .givens
                .ok_or_else(|| Error::Task("sudoku needs a givens range".into()))?;
            sudoku::gen_sudoku(order, range, count, seed)?
        }
        TaskKind::Connectivity { nodes } => graph::gen_connectivity(nodes, count, seed)?,
        TaskKind::ShortestPath { nodes, horizon } => graph::gen_shortest_path(nodes, horizon, count, seed)?,
    };
    for inst in &mut out {
        inst.difficulty = difficulty;
    }
    Ok(out)
}

/// Snap a relaxed prediction onto the output's discrete structure. One-hot
/// groups take the argmax (lowest index on ties); binary entries become 1 at
/// or above 0.5. Continuous outputs pass through.
pub fn discretize(y: &Tensor, output: OutputKind) -> Tensor {
    match output {
        OutputKind::Continuous => y.clone(),
        OutputKind::Binary => y.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }),
        OutputKind::OneHot { classes } => {
            let mut out = vec![0.0; y.numel()];
            for (g, chunk) in y.data().chunks(classes).enumerate() {
                out[g * classes + argmax(chunk)] = 1.0;
            }
            Tensor::new(y.shape().to_vec(), out).expect("same length")
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-instance score: elementwise MSE for continuous tasks, otherwise an
/// accuracy in `[0, 1]` computed on the discretized prediction.
pub fn metric(y_pred: &Tensor, inst: &ProblemInstance) -> Result<f64> {
    if y_pred.numel() != inst.y_star.numel() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: y_pred.shape().to_vec(),
            rhs: inst.y_star.shape().to_vec(),
        });
    }
    let pred = discretize(y_pred, inst.kind.output());
    Ok(match inst.kind {
        TaskKind::Addition { .. } | TaskKind::Completion { .. } | TaskKind::Inverse { .. } => mse(&pred, &inst.y_star),
        TaskKind::Sudoku { order } => indicator(sudoku::solution_consistent(order, &inst.x, &pred)),
        TaskKind::Connectivity { .. } => entry_accuracy(&pred, &inst.y_star),
        TaskKind::ShortestPath { nodes, .. } => indicator(graph::first_action_success(nodes, inst, &pred)?),
    })
}

/// Per-graph exact-match accuracy for connectivity; `None` for other tasks.
pub fn exact_match(y_pred: &Tensor, inst: &ProblemInstance) -> Option<f64> {
    match inst.kind {
        TaskKind::Connectivity { .. } => {
            let pred = discretize(y_pred, inst.kind.output());
            Some(indicator(pred.data() == inst.y_star.data()))
        }
        _ => None,
    }
}

pub fn mse(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.numel().max(1) as f64;
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

fn entry_accuracy(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.numel().max(1) as f64;
    a.data().iter().zip(b.data()).filter(|(x, y)| x == y).count() as f64 / n
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_examples() {
        let oh = OutputKind::OneHot { classes: 3 };
        assert_eq!(discretize(&Tensor::vector(vec![0.1, 0.7, 0.2]), oh).data(), &[0.0, 1.0, 0.0]);
        let two = OutputKind::OneHot { classes: 2 };
        assert_eq!(discretize(&Tensor::vector(vec![0.5, 0.5]), two).data(), &[1.0, 0.0]);
        assert_eq!(discretize(&Tensor::vector(vec![0.49]), OutputKind::Binary).data(), &[0.0]);
    }

    #[test]
    fn sizes_and_validation() {
        assert_eq!(TaskKind::Sudoku { order: 2 }.x_dim(), 80);
        assert_eq!(TaskKind::Sudoku { order: 2 }.y_dim(), 64);
        assert_eq!(TaskKind::ShortestPath { nodes: 8, horizon: 8 }.x_dim(), 80);
        assert!(TaskKind::Completion { n: 3, rank: 4 }.validate().is_err());
        assert!(TaskKind::Sudoku { order: 4 }.validate().is_err());
        assert!(TaskKind::Connectivity { nodes: 1 }.validate().is_err());
    }

    #[test]
    fn perfect_prediction_scores_best() {
        let kinds = [
            TaskKind::Addition { n: 3 },
            TaskKind::Completion { n: 4, rank: 2 },
            TaskKind::Inverse { n: 3 },
            TaskKind::Sudoku { order: 2 },
            TaskKind::Connectivity { nodes: 6 },
            TaskKind::ShortestPath { nodes: 6, horizon: 6 },
        ];
        for kind in kinds {
            let p = SplitParams::desk(kind, Difficulty::Standard);
            for inst in generate(&p, Difficulty::Standard, 5, 1).unwrap() {
                let m = metric(&inst.y_star, &inst).unwrap();
                if kind.is_continuous() {
                    assert_eq!(m, 0.0);
                } else {
                    assert_eq!(m, 1.0, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn metric_rejects_wrong_length() {
        let inst = &matrix::gen_addition(2, 1.0, 1, 0).unwrap()[0];
        assert!(metric(&Tensor::vector(vec![0.0; 3]), inst).is_err());
    }
}
