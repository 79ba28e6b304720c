use thiserror::Error;

/// Errors raised by kernel evaluation, lifting, simulation and the estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("evaluation within the singularity guard of the kernel")]
    SingularPoint,

    #[error("spatial dimension {0} is unsupported (d >= 3 required)")]
    UnsupportedDim(usize),

    #[error("kernel kind `{0}` has no closed-form divergence; use finite differences")]
    NoAnalyticDivergence(&'static str),

    #[error("kernel kind `{0}` has no closed-form form-bound; estimate it numerically")]
    NoAnalyticBound(&'static str),

    #[error("bump normalization off by {error:.3e} with {nodes} nodes per axis")]
    QuadratureUnderresolved { nodes: usize, error: f64 },

    #[error("particles {i} and {j} are at distance {distance:.3e}, inside the singularity guard")]
    CollisionState { i: usize, j: usize, distance: f64 },

    #[error("adaptive substep budget exhausted at t = {time}")]
    SubstepBudgetExhausted { time: f64 },

    #[error("degenerate trial function: {0}")]
    DegenerateTrial(String),

    #[error("first-passage grid underresolved: coarse {coarse:.6}, fine {fine:.6}")]
    GridUnderresolved { coarse: f64, fine: f64 },

    #[error("truncation tail {tail:.3e} exceeds half the tolerance {tolerance:.3e}")]
    TailBoundTooLarge { tail: f64, tolerance: f64 },

    #[error("density slope unstable under bandwidth halving: {coarse:.4} vs {fine:.4}")]
    BandwidthUnderresolved { coarse: f64, fine: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
