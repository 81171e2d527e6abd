use thiserror::Error;

/// Errors produced by the adaptive network stack.
#[derive(Debug, Error)]
pub enum A3dError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration {0} has not been calibrated; run calibration for it first")]
    Uncalibrated(String),
    #[error("infeasible budget: {budget} GFLOPs is below the cheapest entry ({cheapest} GFLOPs)")]
    InfeasibleBudget { budget: f64, cheapest: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite loss ({0})")]
    NonFiniteLoss(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, A3dError>;

impl From<serde_json::Error> for A3dError {
    fn from(e: serde_json::Error) -> Self {
        A3dError::Format(e.to_string())
    }
}

impl From<toml::de::Error> for A3dError {
    fn from(e: toml::de::Error) -> Self {
        A3dError::Format(e.to_string())
    }
}

impl From<csv::Error> for A3dError {
    fn from(e: csv::Error) -> Self {
        A3dError::Format(e.to_string())
    }
}

impl From<image::ImageError> for A3dError {
    fn from(e: image::ImageError) -> Self {
        A3dError::Format(e.to_string())
    }
}
