use thiserror::Error;

use crate::mesh::CellId;

/// Errors raised by the unfitted finite element pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate geometry in cell {cell:?}: {reason}")]
    DegenerateGeometry { cell: CellId, reason: String },

    #[error(
        "cell {cell:?} has a disconnected interior ({components} components); refine the background mesh"
    )]
    DisconnectedCut { cell: CellId, components: usize },

    #[error("aggregation failed: ill-posed cell {cell:?} (index {index}) cannot reach any well-posed cell")]
    AggregationFailure { cell: CellId, index: usize },

    #[error("constraint resolution failed for dof {dof}: {reason}")]
    Constraint { dof: usize, reason: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("localization failure on subdomain {subdomain}: dof {dof}: {reason}")]
    Localization {
        subdomain: usize,
        dof: usize,
        reason: String,
    },

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category name used in result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::InvariantViolation(_) => "invariant",
            Error::DegenerateGeometry { .. } => "degenerate-geometry",
            Error::DisconnectedCut { .. } => "disconnected-cut",
            Error::AggregationFailure { .. } => "aggregation",
            Error::Constraint { .. } => "constraint",
            Error::Solver(_) => "solver",
            Error::Numerical(_) => "numerical",
            Error::Localization { .. } => "localization",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
