use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unit error for `{field}`: {reason}")]
    Unit { field: String, reason: String },

    #[error("near-degenerate Floquet levels: target state {target} and exterior state {exterior} are {gap_mhz:.3} MHz apart (guard {guard_mhz:.1} MHz)")]
    NearDegenerate {
        target: usize,
        exterior: usize,
        gap_mhz: f64,
        guard_mhz: f64,
    },

    #[error(
        "time step did not converge: halving dt changed the propagator by {change:.3e} (tolerance {tolerance:.1e})"
    )]
    NotConverged { change: f64, tolerance: f64 },

    #[error("propagator lost unitarity: defect {defect:.3e}")]
    NonUnitary { defect: f64 },

    #[error("leakage {leakage:.3e} out of the qubit subspace exceeds {limit:.1e}")]
    Leakage { leakage: f64, limit: f64 },

    #[error("eigenstate tracking lost continuity at t = {time_ns:.3} ns (overlap {overlap:.3})")]
    TrackingLost { time_ns: f64, overlap: f64 },

    #[error("angle unwrapping is ambiguous for {angle} between probes {left} and {right} V/m")]
    AmbiguousUnwrap { angle: &'static str, left: f64, right: f64 },

    #[error("no root in bracket [{lo}, {hi}]: {what}")]
    NoRoot { lo: f64, hi: f64, what: String },

    #[error("{0}")]
    Calibration(String),

    #[error("unknown unit label `{0}`")]
    UnknownLabel(String),

    #[error("manifest error in `{field}`: {reason}")]
    Manifest { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn manifest(field: &str, reason: impl Into<String>) -> Self {
        Error::Manifest {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
