use thiserror::Error;

use crate::grid::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid network: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("generation adequacy violated: available {available:.3} MW < demand {demand:.3} MW")]
    Inadequate { available: f64, demand: f64 },

    #[error("no running generator in dispatch")]
    NoRunningGenerator,

    #[error("degenerate split of line {line}: {reason}")]
    DegenerateSplit { line: usize, reason: String },

    #[error("clustering error: {0}")]
    Clustering(String),

    #[error("scenario {0} cannot be served by the constrained network")]
    Unservable(usize),

    #[error("all {0} scenarios are unservable")]
    AllUnservable(usize),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
