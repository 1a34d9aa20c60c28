use std::path::PathBuf;

use thiserror::Error;

/// Last iterate of an eigen-solve that ran out of outer iterations.
#[derive(Debug, Clone)]
pub struct LastIterate {
    pub k_eff: f64,
    pub flux: [Vec<f64>; 2],
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate field: {0}")]
    Degenerate(String),

    #[error("no eigenproblem: {0}")]
    NoEigenproblem(String),

    #[error(
        "iteration limit reached after {iterations} outer iterations \
         (k_eff = {k_eff}, last increment = {increment:e})"
    )]
    IterationLimit {
        iterations: usize,
        k_eff: f64,
        increment: f64,
        last: Box<LastIterate>,
    },

    #[error("linear solver breakdown: {0}")]
    Solver(String),

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Domain(_) => "domain",
            Error::Degenerate(_) => "degenerate",
            Error::NoEigenproblem(_) => "no_eigenproblem",
            Error::IterationLimit { .. } => "iteration_limit",
            Error::Solver(_) => "solver",
            Error::Singular(_) => "singular",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Context { source, .. } => source.kind(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
