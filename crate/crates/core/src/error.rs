use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("mass mismatch: {0}")]
    MassMismatch(String),

    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("numerical instability at t = {time}: {detail}")]
    Instability { time: f64, detail: String },

    #[error("requested time {requested} exceeds the validity window t <= {limit} of the grid")]
    DomainValidity { requested: f64, limit: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Instability { .. } => 3,
            Error::Hypothesis(_) | Error::DegenerateWindow(_) => 1,
            _ => 2,
        }
    }
}
