//! Fixtures shared by the benchmarks.

use ired_core::tasks::{generate, Difficulty, SplitParams, TaskKind};
use ired_core::{Architecture, EnergyModel, ModelSpec, Tensor};

/// A freshly initialized model for `kind` and the first `count` training pairs.
pub fn fixture(kind: TaskKind, arch: Architecture, width: usize, depth: usize, count: usize) -> (EnergyModel, Vec<(Tensor, Tensor)>) {
    let spec = ModelSpec {
        arch,
        width,
        depth,
        x_dim: kind.x_dim(),
        y_dim: kind.y_dim(),
        levels: 10,
    };
    let model = EnergyModel::build(spec, 0).expect("valid spec");
    let data = generate(&SplitParams::desk(kind, Difficulty::Standard), Difficulty::Standard, count, 1)
        .expect("generator")
        .into_iter()
        .map(|i| (i.x, i.y_star))
        .collect();
    (model, data)
}

pub fn tasks() -> [(&'static str, TaskKind, Architecture, usize, usize); 3] {
    [
        ("addition", TaskKind::Addition { n: 8 }, Architecture::MlpEnergy, 128, 3),
        ("sudoku", TaskKind::Sudoku { order: 2 }, Architecture::BoardEnergy, 64, 3),
        ("connectivity", TaskKind::Connectivity { nodes: 8 }, Architecture::EdgeRelationalEnergy, 32, 2),
    ]
}
