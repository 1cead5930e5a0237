use thiserror::Error;

/// Errors raised while reading SMILES.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("valence error on atom {atom}: {msg}")]
    Valence { atom: usize, msg: String },
    #[error("unsupported feature at position {pos}: {msg}")]
    Unsupported { pos: usize, msg: String },
}

impl SmilesError {
    pub(crate) fn syntax(pos: usize, msg: impl Into<String>) -> Self {
        SmilesError::Syntax {
            pos,
            msg: msg.into(),
        }
    }

    pub(crate) fn unsupported(pos: usize, msg: impl Into<String>) -> Self {
        SmilesError::Unsupported {
            pos,
            msg: msg.into(),
        }
    }
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error("fingerprint length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("rule set is empty after filtering")]
    EmptyRuleSet,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("no activity-cliff pairs qualify")]
    NoCliffs,
    #[error("no rows fall in the test range")]
    NoTestRows,
    #[error("rule slot {slot} out of range for a {width}-slot layout")]
    SlotOutOfRange { slot: usize, width: usize },
    #[error("rule fragment {0:?} is not a feature slot")]
    UnknownFragment(String),
    #[error("rule set leaks into the test split: {0}")]
    Leakage(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("no audit contexts available")]
    NoContexts,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
