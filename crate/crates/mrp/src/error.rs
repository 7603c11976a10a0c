//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MrpError>;

#[derive(Debug, Error)]
pub enum MrpError {
    /// A long-CSV row failed to parse; carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// The two groups do not observe the same set of dimensions.
    #[error("dimension mismatch between groups: {0}")]
    DimensionMismatch(String),

    /// The same (group, sample, dim, t) cell appeared twice in the input.
    #[error("duplicate observation row: {0}")]
    DuplicateRow(String),

    /// A panel violated a structural invariant (see `validate_panel` for
    /// the diagnostic, non-erroring variant).
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    /// An argument left the domain it is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A curve has fewer observation points than basis functions.
    #[error("underdetermined fit{at}: {points} points < {basis_len} basis functions")]
    Underdetermined {
        at: String,
        points: usize,
        basis_len: usize,
    },

    /// The least-squares design matrix lost rank (e.g. all observation
    /// points clustered in a few knot spans).
    #[error("rank-deficient design{at}: rank {rank} < {basis_len}")]
    RankDeficient {
        at: String,
        rank: usize,
        basis_len: usize,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// The variance estimate came out non-positive. This is a finite-sample
    /// pathology of the ratio-consistent estimator; the statistic is not
    /// defined in that case and no p-value is fabricated.
    #[error("degenerate variance estimate: sigma2_hat = {0} <= 0")]
    DegenerateVariance(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Covariance square root failed even after jitter escalation.
    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    /// A quadrature or oracle run would exceed its configured budget.
    #[error("cost guard exceeded: {0}")]
    CostGuard(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<MrpError>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
