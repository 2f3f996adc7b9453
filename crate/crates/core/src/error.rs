use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("gradient requested of non-scalar output with shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid noise schedule: {0}")]
    Schedule(String),

    #[error("level {level} outside 0..={max}")]
    Level { level: usize, max: usize },

    #[error("invalid model spec: {0}")]
    ModelSpec(String),

    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid task parameters: {0}")]
    Task(String),

    #[error("non-finite energy at level {level}, step {step}")]
    NonFiniteEnergy {
        level: usize,
        step: usize,
        trace: Box<crate::infer::SolveTrace>,
    },

    #[error("non-finite {what} at iteration {iteration}")]
    Diverged { what: &'static str, iteration: usize },
}
