use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Event;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or missing configuration.
    Config,
    /// Malformed or inconsistent input data.
    Data,
    /// The data is well formed but a statistic is undefined on it.
    Degenerate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("input contains no rows")]
    EmptyInput,

    #[error("event {event} selects no rows")]
    EmptyView { event: Event },

    #[error("view {event} has {count} rows without an observed outcome")]
    CensoredOutcomes { event: Event, count: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid score {value} at row {row}; scores must lie in [0, 1]")]
    InvalidScore { row: usize, value: f64 },

    #[error("invalid weight {value} at row {row}; weights must be finite and positive")]
    InvalidWeight { row: usize, value: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("rate undefined: group `{group}` has no rows with label {label} under {event}")]
    UndefinedRate {
        group: String,
        label: u8,
        event: Event,
    },

    #[error("conditioning mismatch: {0}")]
    ConditioningMismatch(String),

    #[error("policy has no rule for group code {0}")]
    MissingPolicy(usize),

    #[error("policy is not equal-opportunity on the training view (TPR spread {spread:e})")]
    NotEqualOpportunity { spread: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("quantile undefined: feature `{0}` is constant on the target rows")]
    QuantileUndefined(String),

    #[error("cell `{cell}` of group `{group}` has training rows but no target mass; use smoothing")]
    NoTargetSupport { cell: String, group: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidParameter { .. } | Precondition(_) | MissingPolicy(_) => ErrorClass::Config,
            DegenerateFit(_)
            | UndefinedRate { .. }
            | NotEqualOpportunity { .. }
            | QuantileUndefined(_)
            | NoTargetSupport { .. }
            | EmptyView { .. } => ErrorClass::Degenerate,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
