use thiserror::Error;

use crate::solver::SolveState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// A point left the operator's domain cone. `location` is a flat grid
    /// index when the check ran over a field.
    #[error("inadmissible point{}: {constraint} = {value:e}", fmt_location(*.location))]
    Admissibility {
        constraint: String,
        value: f64,
        location: Option<usize>,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("Newton stalled (line search exhausted), worst grid point {worst_point}, residual {residual:e}")]
    NewtonStall { worst_point: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("homotopy stalled at t = {t} (step below floor)")]
    HomotopyStall { t: f64, last_good: Box<SolveState> },

    #[error("rank probe inconclusive: {0}")]
    ProbeInconclusive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_location(loc: Option<usize>) -> String {
    match loc {
        Some(i) => format!(" at grid index {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    /// Attach a grid location to an admissibility error; other variants pass through.
    pub(crate) fn at(self, index: usize) -> Self {
        match self {
            Error::Admissibility {
                constraint, value, ..
            } => Error::Admissibility {
                constraint,
                value,
                location: Some(index),
            },
            other => other,
        }
    }
}
