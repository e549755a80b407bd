//! One-time static per-anchor gain identification.
//!
//! With the UAV parked at a known reference pose (the origin of the anchor
//! frame), the mean raw amplitude of each anchor is divided by the model
//! prediction at that pose, lumping every unmodeled gain (resonance,
//! amplifier tolerances, coil manufacturing spread) into a single coefficient
//! `C_i`. At runtime `V_meas,i = V_raw,i / C_i`.

use serde::{Deserialize, Serialize};

use crate::dsp::{extract_amplitudes, AdcConfig, SampleFrame, SpectralAmplitudes};
use crate::error::{Error, Result};
use crate::geometry::{receiver_normal_in_b, AnchorLayout, Pose, Vec3};
use crate::magnetics::{forward_voltages, CoilParams, ReceiverChain, VOLTAGE_FLOOR_V};

/// Per-anchor lumped gain factors with the pose they were identified at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCoefficients {
    pub c: [f64; 4],
    pub reference_pose: Pose,
    pub n_cal: usize,
}

impl CalibrationCoefficients {
    /// Unity gains: synthetic data generated directly from the forward model.
    pub fn unity() -> Self {
        Self {
            c: [1.0; 4],
            reference_pose: Pose::identity(),
            n_cal: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.c.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!(
                    "calibration coefficient {} is {} (must be positive finite)",
                    i + 1,
                    c
                )));
            }
        }
        if self.n_cal < 1 {
            return Err(Error::Config("n_cal must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run the static calibration over `n_cal` frames captured at `x_ref`.
///
/// Fails on any saturated frame and on anchors whose model voltage at the
/// reference pose is below the numeric floor.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    frames: &[SampleFrame],
    x_ref: &Vec3,
    attitude_ref: &Pose,
    layout: &AnchorLayout,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
    adc: &AdcConfig,
    v_sat_thresh: f64,
) -> Result<CalibrationCoefficients> {
    if frames.is_empty() {
        return Err(Error::Config("calibration requires at least one frame".into()));
    }
    let frequencies = layout.frequencies();

    let mut mean = [0.0f64; 4];
    for (idx, frame) in frames.iter().enumerate() {
        let extracted = extract_amplitudes(frame, &frequencies, adc, v_sat_thresh)?;
        if extracted.saturated.iter().any(|&s| s) {
            return Err(Error::CalibrationSaturated { frame: idx });
        }
        for i in 0..4 {
            mean[i] += extracted.amplitude_v[i];
        }
    }
    let n_cal = frames.len();
    for m in mean.iter_mut() {
        *m /= n_cal as f64;
    }

    let n_b = receiver_normal_in_b(attitude_ref, &Vec3::z())?;
    let model = forward_voltages(x_ref, &n_b, layout, rx_coil, chain)?;
    let mut c = [0.0; 4];
    for i in 0..4 {
        if model[i] < VOLTAGE_FLOOR_V {
            return Err(Error::DegenerateGeometry { anchor: i + 1 });
        }
        c[i] = mean[i] / model[i];
    }

    Ok(CalibrationCoefficients {
        c,
        reference_pose: Pose {
            position: *x_ref,
            orientation: attitude_ref.orientation,
        },
        n_cal,
    })
}

/// Element-wise `V_meas,i = V_raw,i / C_i`; saturation flags are the
/// caller's to carry (they pass through [`SpectralAmplitudes`] untouched).
pub fn apply_calibration(raw: &SpectralAmplitudes, coeffs: &CalibrationCoefficients) -> [f64; 4] {
    std::array::from_fn(|i| raw.amplitude_v[i] / coeffs.c[i])
}

/// Persisted form: anchor id -> coefficient, plus the reference pose and a
/// creation timestamp kept in a separate metadata object so the payload
/// stays byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub meta: CalibrationMeta,
    pub coefficients: CalibrationCoefficients,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub created_unix_s: u64,
}

impl CalibrationFile {
    pub fn new(coefficients: CalibrationCoefficients) -> Self {
        let created_unix_s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            meta: CalibrationMeta { created_unix_s },
            coefficients,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CalibrationFile = serde_json::from_str(&text)?;
        file.coefficients.validate()?;
        Ok(file)
    }
}
