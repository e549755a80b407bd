//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Observation point closer to a transmit coil than the dipole model
    /// permits. The solver treats this as out-of-domain, not fatal.
    #[error("anchor {anchor}: separation {separation_m:.4} m below dipole validity minimum {min_m} m")]
    NearFieldValidity {
        anchor: usize,
        separation_m: f64,
        min_m: f64,
    },

    #[error("direction vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} must be positive")]
    NonPositive(&'static str),

    #[error("tone frequency {frequency_hz} Hz at or above Nyquist ({nyquist_hz} Hz)")]
    Nyquist { frequency_hz: f64, nyquist_hz: f64 },

    #[error("anchors {a} and {b} are {spacing_bins:.2} FFT bins apart (minimum 3)")]
    FdmSpacing { a: usize, b: usize, spacing_bins: f64 },

    #[error("calibration frame {frame} is saturated")]
    CalibrationSaturated { frame: usize },

    #[error("anchor {anchor}: model voltage below numeric floor at the reference pose")]
    DegenerateGeometry { anchor: usize },

    #[error("all anchors saturated; no active measurements this cycle")]
    NoActiveAnchors,

    #[error("trial log contains no touchdown event")]
    NotLanded,

    #[error("range sensor fault: raw distance {0} m")]
    SensorFault(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("series length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time {t} s outside [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
