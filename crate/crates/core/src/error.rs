use thiserror::Error;

/// Errors raised across the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("population too small: initial infectious count {initial_infectious} must be below population {population}")]
    PopulationTooSmall { initial_infectious: f64, population: f64 },

    #[error("output times must be strictly increasing and non-negative")]
    NonMonotoneTimes,

    #[error("non-finite state encountered at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("integration failed for parameters {params:?}: {source}")]
    IntegrationAt {
        params: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("grid dimension `{0}` is empty or degenerate")]
    EmptyDimension(String),

    #[error("target column `{0}` has zero spread and cannot be standardized")]
    DegenerateColumn(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("query point {point:?} lies outside the collocation box")]
    OutOfDomain { point: Vec<f64> },

    #[error("surrogate intensity {value:.3e} at t = {time} is not positive")]
    NonPositiveIntensity { time: f64, value: f64 },

    #[error("optimizer did not converge after {iterations} iterations (|grad|_inf = {grad_norm:.3e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("log-posterior Hessian is not negative definite; eigenvalues {eigenvalues:?}")]
    HessianNotNegativeDefinite { eigenvalues: Vec<f64> },

    #[error("sample has zero spread")]
    DegenerateSample,

    #[error("evaluation grid has {0} points; at least 512 are required")]
    GridTooCoarse(usize),

    #[error("reference series has zero total sum of squares")]
    ZeroTss,

    #[error("reference point is closer than 2 * eps to the collocation box boundary")]
    OutOfBox,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
