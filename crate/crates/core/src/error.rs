use thiserror::Error;

/// Errors surfaced by the library. Solver divergence during a run is not an
/// error value; it is reported through `scenario::RunOutput::divergence` so
/// the partial trace stays available.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("non-finite input: {what}")]
    NonFinite { what: String },

    #[error("{name} must be positive (got {value})")]
    NonPositive { name: String, value: f64 },

    #[error(
        "plant step {dt:.3e} s exceeds the maximum {max:.3e} s (half the fastest switching period)"
    )]
    StepTooLarge { dt: f64, max: f64 },

    #[error("{what}: expected {expected} values, got {got}")]
    LengthMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("communication bus has no visible value for converter {converter}")]
    CommNotVisible { converter: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
