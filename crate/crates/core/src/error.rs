use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The design is not a complete (balanced) factorial where one is required.
    #[error("incomplete design: {0}")]
    IncompleteDesign(String),

    /// Iterative fitting did not converge.
    #[error("no convergence after {iterations} iterations (relative deviance change {change:.3e})")]
    NonConvergence { iterations: usize, change: f64 },

    /// A coefficient diverged, which indicates complete or quasi-complete separation.
    #[error("coefficient {column} diverged (|beta| = {value:.3e}); data appear separated")]
    Separation { column: usize, value: f64 },

    /// A numerical quantity the method depends on degenerated (zero scale, all columns aliased, ...).
    #[error("degenerate computation: {0}")]
    Degenerate(String),

    /// Invalid configuration or method/design pairing.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::IncompleteDesign(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::NonConvergence { .. } | Error::Separation { .. } | Error::Degenerate(_) => 3,
            Error::Config(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
