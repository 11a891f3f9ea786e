use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Quadrature/interferometer condition that failed its lock window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockCondition {
    /// dc optical phase between the arms, φ.
    DcPhase,
    /// rf sideband phase shift, θ.
    RfPhase,
}

impl std::fmt::Display for LockCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LockCondition::DcPhase => f.write_str("dc phase φ"),
            LockCondition::RfPhase => f.write_str("rf phase θ"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("pump power {pump} W is below threshold {threshold} W")]
    BelowThreshold { pump: f64, threshold: f64 },

    #[error("infeasible measurement: reading {measured} is not above the electronics floor {enl}")]
    BelowElectronicsFloor { measured: f64, enl: f64 },

    #[error("interferometer out of lock: {condition} deviates by {deviation:.4} rad (tolerance {tolerance} rad)")]
    OutOfLock {
        condition: LockCondition,
        deviation: f64,
        tolerance: f64,
    },

    #[error("insufficient data: need at least {required} samples, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("spectrum grids differ: {0}")]
    GridMismatch(String),

    #[error("parameter `{0}` is not identifiable from the supplied data")]
    Unidentifiable(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration document: {0}")]
    Schema(String),

    #[error("corrupt trace file at byte offset {offset}: {reason}")]
    CorruptTrace { offset: u64, reason: String },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for usage/schema problems, 2 for infeasible data or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Schema(_) => 1,
            _ => 2,
        }
    }
}
