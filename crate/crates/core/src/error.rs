use thiserror::Error;

use crate::funding_calib::{JumpParams, OUParams};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// The likelihood search ran out of iterations. Carries the best point
    /// seen so callers can still inspect or accept it.
    #[error("optimizer did not converge after {iterations} iterations (best log-likelihood {loglik})")]
    NonConvergence { ou: OUParams, jump: Option<JumpParams>, loglik: f64, iterations: usize },

    #[error("uninformative panel: {0}")]
    UninformativePanel(String),

    #[error("non-decaying fills: fitted k = {k} (expected k > 0)")]
    NonDecayingFills { k: f64 },

    #[error("CFL violation: time step {dt} h exceeds the monotone bound {max_dt} h")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("non-finite value in HJB table at (time {i}, inventory {j}, funding {l})")]
    NonFinite { i: usize, j: usize, l: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Input data failed schema or content validation.
    #[error("{source_name}:{line}: {message}")]
    Schema { source_name: String, line: u64, message: String },

    #[error("seed mismatch: {0}")]
    SeedMismatch(String),

    #[error("cash ledger mismatch: recorded cash {recorded}, ledger {ledger}")]
    LedgerMismatch { recorded: f64, ledger: f64 },

    #[error("table file is corrupt: {0}")]
    CorruptTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by bad inputs rather than by a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::DegenerateSeries(_)
                | Error::UninformativePanel(_)
                | Error::CflViolation { .. }
                | Error::Config(_)
                | Error::Schema { .. }
                | Error::SeedMismatch(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::CorruptTable(_)
        )
    }
}
