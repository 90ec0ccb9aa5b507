use alloc::string::String;

use crate::{Step, TokenIndex};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trace header: {0}")]
    Header(String),

    #[error("step {found} out of order, expected step {expected}")]
    StepOrder { expected: Step, found: Step },

    #[error("step {step}: expected {expected} heads, found {found}")]
    HeadCount {
        step: Step,
        expected: usize,
        found: usize,
    },

    #[error("step {step} head {head}: attention row has {found} entries, expected {expected}")]
    RowLength {
        step: Step,
        head: usize,
        expected: usize,
        found: usize,
    },

    #[error("step {step} head {head}: attention row sums to {sum}")]
    Normalization { step: Step, head: usize, sum: f64 },

    #[error("step {step} head {head}: invalid attention entry {value} at index {index}")]
    InvalidAttention {
        step: Step,
        head: usize,
        index: TokenIndex,
        value: f64,
    },

    #[error("step {step}: value vectors {problem}")]
    Values { step: Step, problem: String },

    #[error("token index {index} out of range for {len} tracked tokens")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("retained tokens carry zero attention mass")]
    ZeroMass,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("trace has no planted ground truth")]
    MissingPlanted,

    #[error("calibration sample is empty")]
    EmptySample,
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
