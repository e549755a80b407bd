//! Closed-form magnetic dipole field and coil transduction.
//!
//! This is the forward model `V_model(x)` shared by calibration, the inverse
//! solver's cost function, and signal synthesis: a compact transmit coil is
//! summarized by its magnetic moment `m = N_t I A_t`, the flux density at the
//! receiver follows the dipole closed form
//! `B = mu0/(4 pi r^3) [3 (m . r_hat) r_hat - m]`, and the receive coil plus
//! gain chain turn `|B . n_r|` into a voltage amplitude
//! `V = G_RX (2 pi f N_r A_r) |B . n_r|`.
//!
//! Free space, linear, isotropic medium throughout; all voltages and currents
//! are peak amplitudes (matching FFT amplitude extraction downstream).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnchorLayout, Vec3};

/// Vacuum permeability, exact SI defined value used by the dipole model.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Minimum transmitter/receiver separation (m) for which the compact-source
/// dipole approximation is trusted: about three coil diameters. Below this
/// the model flags the anchor as out-of-domain and the solver excludes it
/// the same way it excludes saturated ones.
pub const MIN_RANGE_M: f64 = 0.06;

/// Numeric floor below which a model voltage counts as degenerate geometry.
pub const VOLTAGE_FLOOR_V: f64 = 1e-12;

/// Receive (or transmit) coil winding geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilParams {
    pub turns: u32,
    pub area_m2: f64,
    pub radius_m: f64,
}

impl CoilParams {
    /// Circular coil: area derived from the radius.
    pub fn from_radius(turns: u32, radius_m: f64) -> Self {
        Self {
            turns,
            area_m2: std::f64::consts::PI * radius_m * radius_m,
            radius_m,
        }
    }

    /// The tag coil carried by the UAV: identical winding to the anchors.
    pub fn standard_tag() -> Self {
        Self::from_radius(crate::geometry::TX_COIL_TURNS, crate::geometry::TX_COIL_RADIUS_M)
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns < 1 {
            return Err(Error::Config("coil must have at least one turn".into()));
        }
        let expected = std::f64::consts::PI * self.radius_m * self.radius_m;
        if (self.area_m2 - expected).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "coil area {} inconsistent with radius {} (expected {})",
                self.area_m2, self.radius_m, expected
            )));
        }
        Ok(())
    }
}

/// The receive gain chain: a fixed 10x stage followed by a programmable
/// stage of 1..100x, so the total gain spans 10..1000.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverChain {
    pub fixed_stage: f64,
    pub programmable_stage: f64,
}

impl ReceiverChain {
    pub fn new(programmable_stage: f64) -> Self {
        Self {
            fixed_stage: 10.0,
            programmable_stage,
        }
    }

    pub fn gain(&self) -> f64 {
        self.fixed_stage * self.programmable_stage
    }

    pub fn validate(&self) -> Result<()> {
        if (self.fixed_stage - 10.0).abs() > 1e-12 {
            return Err(Error::Config("fixed gain stage is 10x".into()));
        }
        if !(1.0..=100.0).contains(&self.programmable_stage) {
            return Err(Error::Config(format!(
                "programmable stage {} outside 1..100",
                self.programmable_stage
            )));
        }
        Ok(())
    }
}

impl Default for ReceiverChain {
    fn default() -> Self {
        Self::new(100.0)
    }
}

/// Magnetic flux density at the receiver, tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldVector {
    pub b: Vec3,
}

/// Dipole-validity violation, annotated with the anchor index by callers
/// that know it.
#[derive(Debug, Clone, Copy)]
pub struct NearFieldError {
    pub separation_m: f64,
}

impl NearFieldError {
    pub fn for_anchor(self, anchor: usize) -> Error {
        Error::NearFieldValidity {
            anchor,
            separation_m: self.separation_m,
            min_m: MIN_RANGE_M,
        }
    }
}

/// Magnitude of the magnetic moment `m = N I A` (A.m^2); the axis is
/// supplied separately by the caller.
pub fn magnetic_moment(coil: &CoilParams, current_amplitude_a: f64) -> Result<f64> {
    if current_amplitude_a <= 0.0 {
        return Err(Error::NonPositive("drive current amplitude"));
    }
    Ok(coil.turns as f64 * current_amplitude_a * coil.area_m2)
}

/// Closed-form dipole flux density at `obs_pos` from a source of the given
/// moment magnitude along `axis` at `tx_pos`.
pub fn dipole_field(
    moment_magnitude: f64,
    axis: &Vec3,
    tx_pos: &Vec3,
    obs_pos: &Vec3,
) -> std::result::Result<FieldVector, NearFieldError> {
    let r_vec = obs_pos - tx_pos;
    let r = r_vec.norm();
    if r < MIN_RANGE_M {
        return Err(NearFieldError { separation_m: r });
    }
    let r_hat = r_vec / r;
    let m = moment_magnitude * axis;
    let b = MU0 / (4.0 * std::f64::consts::PI * r * r * r)
        * (3.0 * m.dot(&r_hat) * r_hat - m);
    Ok(FieldVector { b })
}

/// Peak voltage amplitude induced in the receive coil and amplified by the
/// gain chain: `V = G (2 pi f N_r A_r) |B . n_r|`. Always non-negative.
pub fn induced_voltage(
    b: &FieldVector,
    rx_normal: &Vec3,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
    frequency_hz: f64,
) -> f64 {
    debug_assert!(frequency_hz > 0.0);
    let omega = 2.0 * std::f64::consts::PI * frequency_hz;
    chain.gain() * omega * rx_coil.turns as f64 * rx_coil.area_m2 * b.b.dot(rx_normal).abs()
}

/// Model voltage for one anchor at receiver position `x_b` in `{B}`.
pub fn anchor_voltage(
    layout: &AnchorLayout,
    anchor: usize,
    x_b: &Vec3,
    rx_normal_b: &Vec3,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
) -> std::result::Result<f64, NearFieldError> {
    let a = &layout.anchors[anchor];
    let tx_coil = CoilParams {
        turns: a.turns,
        area_m2: a.area_m2,
        radius_m: (a.area_m2 / std::f64::consts::PI).sqrt(),
    };
    let moment = magnetic_moment(&tx_coil, a.drive_current_a)
        .expect("layout validation guarantees positive drive current");
    let field = dipole_field(moment, &a.axis_b, &a.position_b, x_b)?;
    Ok(induced_voltage(&field, rx_normal_b, rx_coil, chain, a.frequency_hz))
}

/// Per-anchor model voltages `V_model,i(x, n_r)` at the tag position.
///
/// Errors with the first anchor whose separation violates the dipole
/// validity bound; the caller may exclude that anchor and retry per-anchor.
pub fn forward_voltages(
    x_b: &Vec3,
    rx_normal_b: &Vec3,
    layout: &AnchorLayout,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = anchor_voltage(layout, i, x_b, rx_normal_b, rx_coil, chain)
            .map_err(|e| e.for_anchor(i))?;
    }
    Ok(out)
}
