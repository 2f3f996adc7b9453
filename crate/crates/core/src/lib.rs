//! Learning annealed energy landscapes over (input, output) pairs and solving
//! reasoning tasks by gradient descent across those landscapes.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod infer;
pub mod model;
pub mod rng;
pub mod schedule;
pub mod tasks;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use model::{Architecture, EnergyModel, ModelSpec, ParamSet};
pub use schedule::NoiseSchedule;
pub use tensor::Tensor;
