use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid occupation code `{code}`: {reason}")]
    InvalidCode { code: String, reason: String },

    #[error("schema violation in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("negative {what} {value} for `{code}`")]
    Negative {
        what: &'static str,
        code: String,
        value: f64,
    },

    #[error("duplicate entry for `{0}`")]
    Duplicate(String),

    #[error("shares sum to {sum}, more than 1e-6 away from 1 (pass --normalize to rescale)")]
    Normalization { sum: f64 },

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("no common occupations between {0}")]
    DisjointSupport(String),

    #[error("detailed occupation `{0}` has no parent major-group entry")]
    MissingParent(String),

    #[error("occupations with zero platform share cannot be reweighted: {}", .0.join(", "))]
    ZeroPlatform(Vec<String>),

    #[error("missing {what} for `{code}`")]
    Missing { what: &'static str, code: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("collinear regressors: {0}")]
    Collinear(String),

    #[error("fixed-effect absorption did not converge after {sweeps} sweeps (max change {change:e})")]
    NotConverged { sweeps: usize, change: f64 },

    #[error("need at least {required} clusters, found {found}")]
    InsufficientClusters { found: usize, required: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Label an error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } | Error::Collinear(_) | Error::Numerical(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
