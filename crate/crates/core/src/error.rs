use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The vector has (numerically) zero variance at some iteration, so it has
    /// no unique maximizer to amplify. Tie-break before calling.
    #[error("degenerate input at iteration {iteration}: variance {variance:e} below {eps:e}")]
    DegenerateInput {
        iteration: usize,
        variance: f64,
        eps: f64,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A plaintext input lies outside the domain an approximation accepts.
    #[error("{function}: input {value} outside [{lo}, {hi}]")]
    RangeError {
        function: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A generator or experiment spec that does not parse or is out of range.
    #[error("bad spec: {0}")]
    BadSpec(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("slot width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("rotation by {by} not allowed with {slots} slots")]
    BadRotation { by: usize, slots: usize },

    #[error("range proof violated at {step}: {detail}")]
    RangeProofViolation { step: String, detail: String },

    /// The variance hits zero along a differentiated forward pass.
    #[error("singular forward pass at iteration {iteration}: variance {variance:e}")]
    SingularityError { iteration: usize, variance: f64 },
}
