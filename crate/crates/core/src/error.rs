use alloc::boxed::Box;
use alloc::string::String;

use crate::metrics::Stage;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected width {expected}, found {found}")]
    Dimension {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("non-finite gradient in layer {layer}")]
    NonFinite { layer: usize },
    #[error("aggregation failed for client {client}: {reason}")]
    Aggregation { client: usize, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("{module} failed in {stage} round {round}: {source}")]
    InRound {
        module: &'static str,
        stage: Stage,
        round: usize,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_round(self, module: &'static str, stage: Stage, round: usize) -> Self {
        match self {
            e @ Error::InRound { .. } => e,
            e => Error::InRound {
                module,
                stage,
                round,
                source: Box::new(e),
            },
        }
    }

    /// True for failures caused by arithmetic (non-finite values) rather than by
    /// bad inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::InRound { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
