use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One rejected input line, as reported by CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn join_lines(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A variable the computation needs is missing from the data.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("model spec error: {0}")]
    Spec(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("ingestion failed ({} problem(s)): {}", .0.len(), join_lines(.0))]
    Ingestion(Vec<LineError>),

    /// The likelihood has no unique maximum; `slots` are the parameter
    /// slots spanning the flat or diverging direction.
    #[error("model not identified ({reason}); offending slots: {}", labels.join(", "))]
    NonIdentification {
        slots: Vec<usize>,
        labels: Vec<String>,
        reason: String,
    },

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_max_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        last_theta: Vec<f64>,
        gradient_max_norm: f64,
    },

    #[error("inconsistent likelihoods: {0}")]
    Inconsistency(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("every partition cell was skipped")]
    EmptyPartition,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
