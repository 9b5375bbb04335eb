use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was evaluated at a point where it is undefined
    /// (e.g. a velocity map at `|U| = 0`).
    #[error("singular input: {0}")]
    Singular(&'static str),

    #[error("permutation index {index} out of range for the {family} family")]
    PermutationIndex { family: &'static str, index: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A singular right-hand side was evaluated inside the collision radius.
    #[error("collision: r = {r:.3e} is below the singular-force threshold")]
    Collision { r: f64 },

    #[error("negative radius {0} passed to a time-rate evaluation")]
    NegativeRadius(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A context value (conserved energy, Kepler strength) required by the
    /// selected system was not supplied.
    #[error("missing context value: {0}")]
    MissingContext(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A verification check could not establish its scenario conditions
    /// (e.g. a leg that must abort completed instead).
    #[error("check condition violated: {0}")]
    CheckFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
