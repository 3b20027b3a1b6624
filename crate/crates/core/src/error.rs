//! Error type shared across the library.
//!
//! Every fallible operation returns [`Error`]; variants distinguish the
//! failure classes callers are expected to branch on (bad arguments, privacy
//! accounting problems, numerical divergence, ...). Messages carry the
//! concrete values involved so a failed run can be diagnosed from the log
//! alone.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input violated a precondition (empty dataset, fraction outside
    /// (0,1), non-finite score, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A text input could not be parsed. `row` is the 1-based line number of
    /// the offending record.
    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    /// A run or stage configuration is inconsistent (over-budget split,
    /// missing labels, contradictory knobs). Raised before any computation.
    #[error("configuration error: {0}")]
    Config(String),

    /// Privacy spend exceeds the stated budget, or a budget is degenerate
    /// (delta >= 1).
    #[error("privacy budget exceeded: {0}")]
    OverBudget(String),

    /// Noise calibration is infeasible for the requested budget.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A requested computation is too large for the configured caps.
    #[error("feasibility error: {0}")]
    Feasibility(String),

    /// An iterate became non-finite during optimization.
    #[error("divergence at step {step}: iterate is not finite")]
    Divergence { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand used by validation code.
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
