use thiserror::Error;

use crate::offline::OfflineSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested RF energy exceeds what the scheme can deliver.
    #[error("infeasible RF target {requested:.6e} J, at most {achievable:.6e} J achievable")]
    Infeasible { requested: f64, achievable: f64 },

    /// Dual minimization stopped with a duality gap above tolerance.
    #[error("solver did not converge: relative gap {gap:.3e} after {iterations} iterations")]
    Convergence {
        gap: f64,
        iterations: usize,
        best: Option<Box<OfflineSolution>>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Amount by which an infeasible request overshoots, zero otherwise.
    pub fn shortfall(&self) -> f64 {
        match self {
            Error::Infeasible {
                requested,
                achievable,
            } => (requested - achievable).max(0.0),
            _ => 0.0,
        }
    }
}
