//! Frames, rigid transforms, and the fixed anchor layout.
//!
//! Three frames appear throughout: the world frame `{W}`, the UGV/anchor
//! frame `{B}` attached to the ground robot's landing deck, and the UAV body
//! frame `{T}`. The anchor coils live at fixed positions in `{B}` with their
//! magnetic axes along `+z`; the receive coil normal is fixed in `{T}` and
//! mapped into `{B}` through the flight controller's attitude estimate.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type UnitQuat = UnitQuaternion<f64>;

/// Tolerance for unit-norm invariants on directions and quaternions.
pub const UNIT_TOL: f64 = 1e-9;

/// A rigid pose: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuat::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation.into_inner()),
        }
    }

    /// Translation only.
    pub fn from_translation(position: Vec3) -> Self {
        Self {
            position,
            orientation: UnitQuat::identity(),
        }
    }

    /// Planar pose: position plus yaw about `+z`.
    pub fn from_xy_yaw(x: f64, y: f64, z: f64, yaw_rad: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            orientation: UnitQuat::from_axis_angle(&Vector3::z_axis(), yaw_rad),
        }
    }

    /// Roll/pitch/yaw (XYZ intrinsic) attitude at the origin.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: UnitQuat::from_euler_angles(roll, pitch, yaw),
        }
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.orientation.inverse();
        Self {
            position: -(inv_rot * self.position),
            orientation: inv_rot,
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`. The composed
    /// quaternion is renormalized.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            position: self.orientation * other.position + self.position,
            orientation: UnitQuaternion::new_normalize(
                (self.orientation * other.orientation).into_inner(),
            ),
        }
    }

    /// Rotate a free vector (no translation).
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }
}

/// Apply a rigid transform to a point.
pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.orientation * p + pose.position
}

/// Map the receive-coil normal from the UAV body frame into `{B}` using the
/// attitude estimate: `n_B = R · n_T`.
///
/// Errors if the input is not unit length within [`UNIT_TOL`].
pub fn receiver_normal_in_b(attitude: &Pose, n_t: &Vec3) -> Result<Vec3> {
    let norm = n_t.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    let rotated = attitude.orientation * n_t;
    // Renormalize so downstream unit-norm invariants hold exactly.
    Ok(rotated / rotated.norm())
}

/// One transmit coil on the ground robot, expressed in `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub position_b: Vec3,
    /// Magnetic axis in `{B}`; the mounting constraint fixes it to `+z`.
    pub axis_b: Vec3,
    pub frequency_hz: f64,
    pub drive_current_a: f64,
    pub turns: u32,
    pub area_m2: f64,
}

/// The four-anchor layout plus the landing pad geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLayout {
    pub anchors: [AnchorConfig; 4],
    pub pad_center_b: Vec3,
    pub pad_radius_m: f64,
}

/// Anchor rectangle x-extent (m): the short side of the landing deck.
pub const DECK_SIZE_X_M: f64 = 0.25;
/// Anchor rectangle y-extent (m): the long side of the landing deck.
pub const DECK_SIZE_Y_M: f64 = 0.44;
/// Radius of the marked landing area (m).
pub const PAD_RADIUS_M: f64 = 0.11;
/// Transmit coil geometry: 5 turns at 1.9 cm radius.
pub const TX_COIL_TURNS: u32 = 5;
pub const TX_COIL_RADIUS_M: f64 = 0.019;
/// Excitation frequencies, anchors 1..4 (Hz).
pub const ANCHOR_FREQUENCIES_HZ: [f64; 4] = [210e3, 199e3, 189e3, 181e3];

impl AnchorLayout {
    /// The deck layout used throughout: anchors at the corners of the
    /// 0.25 m x 0.44 m rectangle centered on the pad, in the z = 0 plane of
    /// `{B}`, axes vertical, one unique excitation frequency each.
    ///
    /// Exact physical coil coordinates are not published for the hardware
    /// this models; corner placement is this crate's convention.
    pub fn standard() -> Self {
        let hx = DECK_SIZE_X_M / 2.0;
        let hy = DECK_SIZE_Y_M / 2.0;
        let area = std::f64::consts::PI * TX_COIL_RADIUS_M * TX_COIL_RADIUS_M;
        let corners = [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)];
        let anchors = std::array::from_fn(|i| AnchorConfig {
            position_b: Vec3::new(corners[i].0, corners[i].1, 0.0),
            axis_b: Vec3::z(),
            frequency_hz: ANCHOR_FREQUENCIES_HZ[i],
            drive_current_a: 1.0,
            turns: TX_COIL_TURNS,
            area_m2: area,
        });
        Self {
            anchors,
            pad_center_b: Vec3::zeros(),
            pad_radius_m: PAD_RADIUS_M,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.anchors.iter().enumerate() {
            if (a.axis_b - Vec3::z()).norm() > UNIT_TOL {
                return Err(Error::Config(format!(
                    "anchor {} axis must be +z of {{B}} (mounting constraint)",
                    i + 1
                )));
            }
            if !(a.frequency_hz > 0.0 && a.drive_current_a > 0.0 && a.area_m2 > 0.0) {
                return Err(Error::Config(format!(
                    "anchor {} has non-positive drive parameters",
                    i + 1
                )));
            }
            if a.turns == 0 {
                return Err(Error::Config(format!("anchor {} has zero turns", i + 1)));
            }
            for (j, b) in self.anchors.iter().enumerate().skip(i + 1) {
                if a.frequency_hz == b.frequency_hz {
                    return Err(Error::Config(format!(
                        "anchors {} and {} share frequency {} Hz",
                        i + 1,
                        j + 1,
                        a.frequency_hz
                    )));
                }
            }
        }
        if self.pad_radius_m <= 0.0 {
            return Err(Error::Config("pad radius must be positive".into()));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.anchors[i].frequency_hz)
    }
}

/// Map every anchor position and axis through the UGV pose into `{W}`.
pub fn anchors_in_world(ugv_pose: &Pose, layout: &AnchorLayout) -> [(Vec3, Vec3); 4] {
    std::array::from_fn(|i| {
        let a = &layout.anchors[i];
        (
            transform_point(ugv_pose, &a.position_b),
            ugv_pose.rotate(&a.axis_b),
        )
    })
}
