//! Magneto-inductive (MI) relative localization for UAV-on-UGV docking,
//! implemented end to end in software.
//!
//! The pipeline mirrors the onboard processing chain of a frequency-multiplexed
//! magnetic anchor/tag system: four vertically-oriented transmit coils on a
//! ground robot excite dipole fields at distinct frequencies; a single receive
//! coil on the aerial robot picks up the superposition; the signal chain
//! (ADC, flattop-windowed FFT, peak interpolation) recovers per-anchor
//! voltage amplitudes; a calibrated inverse-dipole solver turns amplitudes
//! into a 3D position in the ground-robot frame; and an EKF fuses those fixes
//! with flow/inertial odometry and a step-filtered rangefinder altitude.
//!
//! The [`sim`] module closes the loop: it replays docking scenarios (static
//! hover, linear tracking, composite motion), synthesizes all sensors from
//! ground truth, and logs everything needed for the RMSE / success-rate
//! metrics in [`metrics`].

pub mod calibration;
pub mod dsp;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod magnetics;
pub mod metrics;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
