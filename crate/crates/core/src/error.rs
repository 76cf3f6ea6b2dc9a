use thiserror::Error;

/// Errors raised by the pack model, planners and simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step must be non-negative, got {0} h")]
    NegativeTimeStep(f64),

    #[error("state of charge {0} is outside [0, 1]")]
    SocOutOfRange(f64),

    #[error("usage time must be positive to define a C-rate")]
    ZeroUsageTime,

    #[error("time {t} h is outside the mission span [{start}, {end})")]
    OutsideMission { t: f64, start: f64, end: f64 },

    #[error("segment count {k} is out of range 1..={n}")]
    SegmentOutOfRange { k: usize, n: usize },

    #[error("mission has no segments")]
    EmptyMission,

    #[error("segment {index} is malformed: {reason}")]
    BadSegment { index: usize, reason: String },

    #[error("cells {i} and {j} are {distance} apart, beyond the maximum distance {max}")]
    DistanceExceeded {
        i: usize,
        j: usize,
        distance: usize,
        max: usize,
    },

    #[error("voltage {v} V cannot push {i_peak} A through {r} ohm")]
    VoltageTooLow { v: f64, i_peak: f64, r: f64 },

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("no connected graph after {0} attempts")]
    Disconnected(usize),

    #[error("results were produced from different scenario seeds: {0}")]
    SeedMismatch(String),

    #[error("solver backend failed: {0}")]
    Solver(String),

    #[error("malformed results: {0}")]
    MalformedResults(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
