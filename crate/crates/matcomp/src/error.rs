//! Crate-wide error type.

use crate::observe::BudgetLedger;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Domain(String),

    /// A numeric routine failed or produced unusable output.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative kernel hit its iteration cap; `residual` is the last
    /// measured residual (NaN when nothing usable was produced).
    #[error("{op} did not converge: residual {residual:.3e}")]
    NonConvergence { op: &'static str, residual: f64 },

    /// A square system was singular to the working tolerance.
    #[error("matrix is singular to tolerance (rcond {rcond:.3e})")]
    Singular { rcond: f64 },

    /// A sampler gave up after too many singular probes. Carries the ledger
    /// so wasted observations remain reportable.
    #[error("probe cap exceeded after {attempts} attempts ({} observations spent)", ledger.spent())]
    ProbeCapExceeded { attempts: usize, ledger: BudgetLedger },

    /// The observation budget ran out mid-strategy.
    #[error("observation budget exhausted ({} of {} spent)", ledger.spent(), ledger.total_budget())]
    BudgetExhausted { ledger: BudgetLedger },

    /// Constraints pin the same quantity to conflicting values.
    #[error("inconsistent constraints: {0}")]
    Inconsistent(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Ledger attached to a sampling failure, if any.
    pub fn ledger(&self) -> Option<&BudgetLedger> {
        match self {
            Error::ProbeCapExceeded { ledger, .. } | Error::BudgetExhausted { ledger } => {
                Some(ledger)
            }
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
