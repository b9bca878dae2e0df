use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("butterfly arbitrage at t={t}, K={strike}: second strike derivative {value:e} is not positive")]
    ButterflyArbitrage { t: f64, strike: f64, value: f64 },

    #[error("price {price} is below the intrinsic lower bound {bound}")]
    BelowIntrinsic { price: f64, bound: f64 },

    #[error("price {price} is above the discounted spot upper bound {bound}")]
    AboveSpot { price: f64, bound: f64 },

    #[error("rank-deficient design matrix; dependent basis functions: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("kernel weights underflow at query {query}")]
    KernelUnderflow { query: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("interaction budget exceeded: estimated {estimated:e} kernel evaluations, budget {budget:e}")]
    Budget { estimated: f64, budget: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Io { .. } | Error::Parse { .. } => 2,
            Error::Budget { .. } => 4,
            _ => 3,
        }
    }
}
