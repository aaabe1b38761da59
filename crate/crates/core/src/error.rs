use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("policy space of {count} policies exceeds cap of {cap}")]
    PolicyExplosion { count: u128, cap: usize },

    #[error("joint state space of {size} exceeds oracle capacity {cap}")]
    OracleCapacity { size: usize, cap: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("corner solution: firm {firm} has negative equilibrium quantity {quantity}")]
    CornerSolution { firm: usize, quantity: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
