use thiserror::Error;

/// Errors produced by the state engine, the counting model, and the
/// protocol layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("register overflow: {requested} qubits exceeds the {max}-qubit limit")]
    RegisterOverflow { requested: usize, max: usize },

    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("relabeling does not factor out: {0}")]
    NonFactorable(String),

    #[error("state is not normalizable (norm² = {0})")]
    ZeroNorm(f64),

    #[error("pairs are not adjacent: right endpoint {0} vs left endpoint {1}")]
    NonAdjacentPairs(u32, u32),
}

pub type Result<T> = std::result::Result<T, Error>;
