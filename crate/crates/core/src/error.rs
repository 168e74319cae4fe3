use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid configuration: {field} = {value}")]
    InvalidConfig { field: &'static str, value: f64 },
    #[error("at least one attraction point is required")]
    NoAttractionPoints,
    #[error("{users} users cannot populate {points} attraction points")]
    TooFewUsers { users: usize, points: usize },
    #[error("could not place {points} attraction points {separation} m apart")]
    PlacementFailed { points: usize, separation: f64 },
    #[error("could not place a user inside the arena")]
    UserPlacementFailed,
    #[error("scenario text, line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("user and UAV coincide; channel gain is undefined at zero distance")]
    ZeroDistance,
}

#[derive(Debug, Error, PartialEq)]
pub enum QueueingError {
    #[error("offered load {load:.4e} cycles/s meets or exceeds capacity {capacity:.4e} cycles/s")]
    CapacityExceeded { load: f64, capacity: f64 },
    #[error("a single user cannot meet its deadline on one serving UAV")]
    InfeasibleProfile,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("expected {expected} input features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("weights file: {0}")]
    Format(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LocalizationError {
    #[error("localization did not terminate within {cap} iterations")]
    IterationCap { cap: usize },
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Queueing(#[from] QueueingError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
