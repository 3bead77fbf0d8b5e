use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("security level {0} outside [0, 1)")]
    SecurityDomain(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid solver config: {0}")]
    InvalidConfig(String),

    #[error("point is not feasible: component {index} = {value} outside [{lower}, {upper}]")]
    Infeasible {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("point too close to the boundary for step {step}: component {index} has margin {margin}")]
    TooCloseToBoundary { index: usize, margin: f64, step: f64 },

    #[error("non-finite operator value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("degenerate correction direction (|d| = 0 with X != X~)")]
    DegenerateDirection,

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("scenario file: {0}")]
    Schema(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}
