//! Error types shared across the crate.

use thiserror::Error;

/// Errors from belief construction and the two update rules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    /// An observation had zero likelihood under the entire prior support.
    /// Signals a mismatch between the perception model and the world; the
    /// controller decides how to recover.
    #[error("observation {signal} has zero likelihood under the prior support")]
    ImpossibleObservation { signal: i32 },

    /// Matrix rows must be probability vectors.
    #[error("perception matrix row {row} is malformed: {reason}")]
    MalformedMatrix { row: usize, reason: String },

    /// A shift moved the whole belief mass out of the status set.
    #[error("shift by {shift} units left an all-zero belief")]
    EmptyShiftedBelief { shift: i32 },

    /// Status-space parameters out of range (n >= 1, delta > 0).
    #[error("invalid status space: {0}")]
    InvalidSpace(String),

    /// A status/action/percept value outside [-n, n].
    #[error("value {value} outside the status range [-{n}, {n}]")]
    OutOfRange { value: i32, n: i32 },
}

/// Errors from the simulated insertion world.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("initial offset {offset_mm} mm outside the reachable band (+/-{halfspan_mm} mm)")]
    OffsetOutOfRange { offset_mm: f64, halfspan_mm: f64 },

    #[error("invalid environment config: {0}")]
    InvalidConfig(String),

    #[error("invalid trajectory parameters: {0}")]
    InvalidParams(String),
}

/// Errors from feature extraction, training, and confusion estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    /// Feature extraction needs at least two samples.
    #[error("trajectory with {len} samples is too short for feature extraction")]
    DegenerateTrajectory { len: usize },

    /// Training needs at least two distinct classes.
    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    /// Confusion estimation saw no held-out samples for a status.
    #[error("status {label} has no held-out samples")]
    MissingClass { label: String },

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("model file is inconsistent: {0}")]
    MalformedModel(String),
}
