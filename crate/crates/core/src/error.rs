//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Scenario generation could not satisfy a constraint.
    #[error("generation error: {0}")]
    Generation(String),

    /// Invalid argument to an operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// Radar frame synthesis rejected a target.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// Tensor shape does not match the configuration.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Slant range shorter than the radar/object height difference.
    #[error("invalid slant range: rho={rho} < |H - h_o|={min}")]
    InvalidSlantRange { rho: f64, min: f64 },

    /// Direction estimation needs at least two detections.
    #[error("insufficient history: {0} detection(s), need at least 2")]
    InsufficientHistory(usize),

    /// Displacement below the resolution floor.
    #[error("ambiguous direction: |dx|={dx} below resolution floor {floor}")]
    AmbiguousDirection { dx: f64, floor: f64 },

    /// Line does not intersect the requested plane.
    #[error("no intersection: {0}")]
    NoIntersection(String),

    /// Line direction is the zero vector or the line lies in the plane.
    #[error("degenerate line: {0}")]
    DegenerateLine(String),

    /// Blocking object with zero speed has no defined crossing time.
    #[error("undefined time to block: object speed is zero")]
    UndefinedTime,

    /// Model parameter shapes disagree.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// A handover decision received an inconsistent prediction.
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),

    /// Checkpoint or artifact serialization failure.
    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
