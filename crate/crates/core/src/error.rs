use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bit source exhausted after {read} bits before the interval was resolved")]
    Underflow { read: usize },

    #[error("symbol {symbol} at step {step} has a zero-width interval")]
    Corrupt { step: usize, symbol: usize },

    #[error("index out of range for enumerative codebook")]
    IndexOutOfRange,

    #[error("sequence energy {energy} exceeds the sphere bound {bound}")]
    EnergyBound { energy: u64, bound: u64 },

    #[error("infeasible energy bound: {0}")]
    Infeasible(String),

    #[error("quadrature did not converge to {tolerance:e} relative after {intervals} intervals")]
    Quadrature { tolerance: f64, intervals: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("simulation step too coarse: nonlinear phase {phase:e} rad exceeds cap {cap:e} rad")]
    StepTooCoarse { phase: f64, cap: f64 },

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
