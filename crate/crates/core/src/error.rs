use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient: rank {rank} < {p} columns")]
    RankDeficient { rank: usize, p: usize },

    #[error("least squares needs p <= n (got p = {p}, n = {n}); use pinv_fit or ridge_fit instead")]
    Overparameterized { n: usize, p: usize },

    #[error("evaluator returned a non-finite value at draw {index}")]
    NonFinite { index: usize },

    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },

    #[error("unbiasedness is infeasible: required conditional error probability {required} exceeds 1")]
    Infeasible { required: f64 },

    #[error("only {hits} draws fell inside the window (need at least {required}); increase the bandwidth or the number of draws")]
    SparseWindow { hits: usize, required: usize },

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("replication {replication}: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {replication}, p = {p}: {source}")]
    Fit {
        replication: u64,
        p: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. } | Error::Numerical(_) | Error::NonFinite { .. } => true,
            Error::Replication { source, .. } | Error::Fit { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
