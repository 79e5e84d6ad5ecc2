use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hardware configuration: {0}")]
    InvalidHardware(String),
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("invalid tile: {0}")]
    InvalidTile(String),
    #[error("infeasible tile: {0}")]
    InfeasibleTile(String),
    #[error("invalid search bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid hardware space: {0}")]
    InvalidSpace(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-positive execution time: {0}")]
    NonPositiveTime(f64),
    #[error("results store is missing {count} entries (first: {first})")]
    MissingCacheEntries { count: usize, first: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
