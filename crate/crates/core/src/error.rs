//! Error type shared by every module of the crate.

use thiserror::Error;

/// Things that can go wrong while building grids, plans, teams or reports.
#[derive(Debug, Error)]
pub enum Error {
    /// A grid extent was zero or the padded size overflowed.
    #[error("invalid grid dimensions: {0}")]
    Dimension(String),

    /// Memory for a grid or buffer could not be reserved.
    #[error("allocation of {bytes} bytes failed")]
    Resource { bytes: usize },

    /// A coordinate fell outside the padded box or an interior range.
    #[error("coordinate out of bounds: {0}")]
    Bounds(String),

    /// Two grids that must have identical extents do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration of a barrier, team or benchmark.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A range could not be split into the requested number of parts.
    #[error("cannot partition {extent} into {parts} parts")]
    Partition { extent: usize, parts: usize },

    /// A sweep plan is inconsistent with the selected variant.
    #[error("invalid sweep plan: {0}")]
    Plan(String),

    /// The requested threads cannot be placed on the detected topology.
    #[error("placement failed: {0}")]
    Placement(String),

    /// The OS refused an affinity change.
    #[error("pinning to hardware thread {hw_thread} failed: {reason}")]
    Pinning { hw_thread: usize, reason: String },

    /// A model input outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The instrumented schedule checker found an ordering violation.
    #[error("schedule violation: {0}")]
    Schedule(String),

    /// Malformed topology file or other text input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
