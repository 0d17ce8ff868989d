use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("outside the chart: {0}")]
    OutOfChart(String),
    #[error("point not on manifold: {0}")]
    InvalidPoint(String),
    #[error("product manifold needs at least one component")]
    EmptyProduct,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ill-conditioned weights: {0}")]
    IllConditioned(String),
    #[error("infeasible reference: {0}")]
    InfeasibleReference(String),
    #[error("degenerate surface samples: {0}")]
    DegenerateSamples(String),
    #[error("tracking lost: {0}")]
    TrackingLost(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
