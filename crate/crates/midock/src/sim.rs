//! Closed-loop scenario simulator: UGV trajectory playback, UAV kinematics
//! under a velocity controller, full sensor synthesis (MI frames, flow
//! odometry, ToF ranging), and mission sequencing from calibration through
//! takeoff, task, and landing.
//!
//! One trial is fully determined by its configuration and seed. The base
//! loop runs at 100 Hz; MI estimation at 20 Hz; ToF at 50 Hz. Ground truth
//! drives every synthesized sensor, so the estimation pipeline under test
//! sees exactly the physics the forward model describes plus the configured
//! noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::calibration::{calibrate, CalibrationCoefficients};
use crate::dsp::{extract_amplitudes, synthesize_frame, AdcConfig};
use crate::error::{Error, Result};
use crate::fusion::Fuser;
use crate::geometry::{transform_point, AnchorLayout, Pose, Vec3};
use crate::magnetics::{forward_voltages, CoilParams, ReceiverChain};
use crate::metrics::{batch_report, BatchReport};
use crate::solver::{MiEstimate, MiRuntime, SolverOptions};

/// Base integration/control step (truth, EKF, controller): 100 Hz.
pub const BASE_DT_S: f64 = 0.01;
/// MI estimation runs every 5th base step (20 Hz).
pub const MI_DECIMATION: usize = 5;
/// ToF runs every 2nd base step (50 Hz).
pub const TOF_DECIMATION: usize = 2;
/// Consecutive rejected or empty MI cycles before the supervisor aborts.
pub const DIVERGENCE_ABORT_CYCLES: usize = 60;
/// Hover altitude above the deck for every mission (m).
pub const HOVER_Z_M: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Flow-only hover: MI aiding disabled, drift accumulates unchecked.
    Baseline,
    S1Hover,
    S1InOut,
    S2Linear,
    S3Composite,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "s1_hover" | "s1hover" => Ok(Self::S1Hover),
            "s1_inout" | "s1_in_out" | "s1inout" => Ok(Self::S1InOut),
            "s2_linear" | "s2linear" | "s2" => Ok(Self::S2Linear),
            "s3_composite" | "s3composite" | "s3" => Ok(Self::S3Composite),
            other => Err(Error::Config(format!("unknown scenario kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::S1Hover => "s1_hover",
            Self::S1InOut => "s1_inout",
            Self::S2Linear => "s2_linear",
            Self::S3Composite => "s3_composite",
        }
    }
}

/// UGV planar pose waypoint; segments between waypoints are smoothstep
/// blended so the path is C1 (zero velocity at every join).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseWaypoint {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub yaw_deg: f64,
}

/// UAV mission setpoint in `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointWaypoint {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
}

/// Sensor noise magnitudes. The defaults are calibrated at the system level
/// so the closed-loop hover RMSE and the flow-only drift failures land in
/// the observed bands; `midock sweep` reproduces that calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub adc_noise_sigma_v: f64,
    pub flow_velocity_sigma_m_s: f64,
    /// Flow bias random-walk intensity (m/s per sqrt(s)), horizontal axes.
    pub flow_bias_drift: f64,
    pub tof_sigma_m: f64,
    pub attitude_sigma_rad: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            adc_noise_sigma_v: 0.015,
            flow_velocity_sigma_m_s: 0.03,
            flow_bias_drift: 0.035,
            tof_sigma_m: 0.003,
            attitude_sigma_rad: 0.03,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            adc_noise_sigma_v: 0.0,
            flow_velocity_sigma_m_s: 0.0,
            flow_bias_drift: 0.0,
            tof_sigma_m: 0.0,
            attitude_sigma_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.adc_noise_sigma_v,
            self.flow_velocity_sigma_m_s,
            self.flow_bias_drift,
            self.tof_sigma_m,
            self.attitude_sigma_rad,
        ];
        if all.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("noise magnitudes must be non-negative".into()));
        }
        Ok(())
    }

    /// Set a field by name; the sweep command's interface.
    pub fn set_by_name(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "adc_noise_sigma" | "adc_noise_sigma_v" => self.adc_noise_sigma_v = value,
            "flow_velocity_sigma" | "flow_velocity_sigma_m_s" => {
                self.flow_velocity_sigma_m_s = value
            }
            "flow_bias_drift" => self.flow_bias_drift = value,
            "tof_sigma" | "tof_sigma_m" => self.tof_sigma_m = value,
            "attitude_sigma" | "attitude_sigma_rad" => self.attitude_sigma_rad = value,
            other => {
                return Err(Error::Config(format!("unknown noise parameter '{other}'")));
            }
        }
        self.validate()
    }
}

/// Scalar EKF tuning, expanded into the matrix-valued
/// [`crate::fusion::EkfConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfTuning {
    pub r_mag_xy_std_m: f64,
    pub r_mag_z_std_m: f64,
    pub r_tof_std_m: f64,
    pub q_pos_psd: f64,
    pub q_vel_psd: f64,
    /// Squared-Mahalanobis gate on MI position innovations (<= 0 disables).
    pub innovation_gate_d2: f64,
}

impl Default for EkfTuning {
    fn default() -> Self {
        Self {
            r_mag_xy_std_m: 0.02,
            r_mag_z_std_m: 0.04,
            r_tof_std_m: 0.01,
            // Position PSD absorbs the unmodeled flow-bias drift so the
            // filter stays consistent when odometry wanders.
            q_pos_psd: 2e-3,
            q_vel_psd: 2e-3,
            innovation_gate_d2: 0.0,
        }
    }
}

impl EkfTuning {
    pub fn to_config(self) -> crate::fusion::EkfConfig {
        use nalgebra::{Matrix3, SMatrix, SVector};
        crate::fusion::EkfConfig {
            r_mag: Matrix3::from_diagonal(&Vec3::new(
                self.r_mag_xy_std_m.powi(2),
                self.r_mag_xy_std_m.powi(2),
                self.r_mag_z_std_m.powi(2),
            )),
            r_tof: self.r_tof_std_m.powi(2),
            q_process: SMatrix::<f64, 6, 6>::from_diagonal(&SVector::<f64, 6>::from_row_slice(
                &[
                    self.q_pos_psd,
                    self.q_pos_psd,
                    self.q_pos_psd,
                    self.q_vel_psd,
                    self.q_vel_psd,
                    self.q_vel_psd,
                ],
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub kp: f64,
    pub kd: f64,
    pub max_xy_m_s: f64,
    pub max_z_m_s: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        // Near-critically damped against the 0.15 s velocity-tracking lag.
        Self {
            kp: 2.0,
            kd: 0.1,
            max_xy_m_s: 0.5,
            max_z_m_s: 0.4,
        }
    }
}

/// Fault injection: force one anchor's synthesized amplitude inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFault {
    /// 0-based anchor index.
    pub anchor: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub forced_amplitude_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    pub seed: u64,
    /// Empty selects the built-in path for `kind`.
    pub ugv_path: Vec<PoseWaypoint>,
    /// Empty selects the built-in mission for `kind`.
    pub setpoints: Vec<SetpointWaypoint>,
    pub noise: NoiseConfig,
    pub layout: AnchorLayout,
    pub adc: AdcConfig,
    pub rx_coil: CoilParams,
    pub chain: ReceiverChain,
    pub v_sat_thresh_v: f64,
    pub solver: SolverOptions,
    pub ekf: EkfTuning,
    pub controller: ControllerParams,
    /// Deck (pad/coil plane) height above the floor in the world frame.
    pub deck_height_m: f64,
    pub n_cal: usize,
    pub disable_mi: bool,
    pub saturation_fault: Option<SaturationFault>,
    pub landing_speed_m_s: f64,
    /// UAV velocity-tracking time constant.
    pub uav_tau_s: f64,
    /// True end-to-end gain relative to the nominal model; calibration
    /// absorbs it into the per-anchor coefficients.
    pub unmodeled_gain_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let adc = AdcConfig::default();
        Self {
            kind: ScenarioKind::S1Hover,
            duration_s: 0.0, // filled by normalize()
            seed: 0,
            ugv_path: Vec::new(),
            setpoints: Vec::new(),
            noise: NoiseConfig::default(),
            layout: AnchorLayout::standard(),
            adc,
            rx_coil: CoilParams::standard_tag(),
            chain: ReceiverChain::new(70.0),
            v_sat_thresh_v: adc.default_sat_thresh_v(),
            solver: SolverOptions {
                // Amplitudes below the quantization floor carry no usable
                // information; the dipole null region produces exactly that.
                min_amplitude_v: 5e-4,
                // Fewer than three anchors cannot fix a 3D position.
                min_active_anchors: 3,
                ..SolverOptions::default()
            },
            ekf: EkfTuning::default(),
            controller: ControllerParams::default(),
            deck_height_m: 0.30,
            n_cal: 32,
            disable_mi: false,
            saturation_fault: None,
            landing_speed_m_s: 0.3,
            uav_tau_s: 0.15,
            unmodeled_gain_scale: 1.0,
        }
    }
}

impl ScenarioConfig {
    /// Built-in scenario with the default path, mission, and duration.
    pub fn template(kind: ScenarioKind) -> Self {
        let mut cfg = Self {
            kind,
            ..Self::default()
        };
        cfg.normalize();
        cfg
    }

    /// Fill empty path/setpoints/duration from the built-in mission for the
    /// configured kind. File-based configs usually leave those empty.
    pub fn normalize(&mut self) {
        let z = HOVER_Z_M;
        if self.setpoints.is_empty() {
            self.setpoints = match self.kind {
                ScenarioKind::Baseline | ScenarioKind::S1Hover => vec![
                    sp(1.0, 0.0, 0.0, 0.0),
                    sp(3.0, 0.0, 0.0, z),
                    sp(13.0, 0.0, 0.0, z),
                ],
                ScenarioKind::S1InOut => vec![
                    sp(1.0, 0.0, 0.0, 0.0),
                    sp(3.0, 0.0, 0.0, z),
                    sp(5.0, 0.0, 0.0, z),
                    sp(9.0, 0.6, 0.0, z),
                    sp(13.0, 0.6, 0.0, z),
                    sp(17.0, 0.0, 0.0, z),
                    sp(19.5, 0.0, 0.0, z),
                ],
                ScenarioKind::S2Linear => vec![
                    sp(1.0, 0.0, 0.0, 0.0),
                    sp(3.0, 0.0, 0.0, z),
                    sp(27.0, 0.0, 0.0, z),
                ],
                ScenarioKind::S3Composite => vec![
                    sp(1.0, 0.0, 0.0, 0.0),
                    sp(3.0, 0.0, 0.0, z),
                    sp(22.0, 0.0, 0.0, z),
                ],
            };
        }
        if self.ugv_path.is_empty() {
            self.ugv_path = match self.kind {
                ScenarioKind::Baseline | ScenarioKind::S1Hover | ScenarioKind::S1InOut => {
                    vec![wp(0.0, 0.0, 0.0, 0.0)]
                }
                // Two forward-backward cycles, 0.5 m legs, ~0.2 m/s peak.
                ScenarioKind::S2Linear => vec![
                    wp(0.0, 0.0, 0.0, 0.0),
                    wp(5.0, 0.0, 0.0, 0.0),
                    wp(9.0, 0.5, 0.0, 0.0),
                    wp(10.0, 0.5, 0.0, 0.0),
                    wp(14.0, 0.0, 0.0, 0.0),
                    wp(15.0, 0.0, 0.0, 0.0),
                    wp(19.0, 0.5, 0.0, 0.0),
                    wp(20.0, 0.5, 0.0, 0.0),
                    wp(24.0, 0.0, 0.0, 0.0),
                    wp(27.0, 0.0, 0.0, 0.0),
                ],
                // Piecewise segments with speed changes and <= 20 deg heading
                // steps.
                ScenarioKind::S3Composite => vec![
                    wp(0.0, 0.0, 0.0, 0.0),
                    wp(5.0, 0.0, 0.0, 0.0),
                    wp(8.0, 0.45, 0.0, 0.0),
                    wp(10.0, 0.45, 0.0, 18.0),
                    wp(13.0, 0.75, 0.20, 18.0),
                    wp(14.0, 0.75, 0.20, 18.0),
                    wp(17.0, 0.35, 0.10, 0.0),
                    wp(20.0, 0.0, 0.0, 0.0),
                    wp(22.0, 0.0, 0.0, 0.0),
                ],
            };
        }
        if self.kind == ScenarioKind::Baseline {
            self.disable_mi = true;
        }
        if self.duration_s <= 0.0 {
            let land_start = self.setpoints.last().map(|s| s.t_s).unwrap_or(0.0);
            let descent = HOVER_Z_M / self.landing_speed_m_s.max(1e-6);
            self.duration_s = land_start + descent + 4.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_s <= 0.0 {
            return Err(Error::Config("duration must be positive".into()));
        }
        self.noise.validate()?;
        self.layout.validate()?;
        self.adc.validate()?;
        self.rx_coil.validate()?;
        self.chain.validate()?;
        self.solver.validate()?;
        if self.setpoints.is_empty() {
            return Err(Error::Config("mission has no setpoints".into()));
        }
        for pair in self.setpoints.windows(2) {
            if pair[1].t_s <= pair[0].t_s {
                return Err(Error::Config("setpoint times must increase".into()));
            }
        }
        for pair in self.ugv_path.windows(2) {
            if pair[1].t_s <= pair[0].t_s {
                return Err(Error::Config("path waypoint times must increase".into()));
            }
            // Heading-change envelope: the position-only solver tolerates
            // only limited yaw steps per segment.
            if (pair[1].yaw_deg - pair[0].yaw_deg).abs() > 20.0 + 1e-9 {
                return Err(Error::Config(format!(
                    "heading change {:.1} deg exceeds the 20 deg envelope",
                    (pair[1].yaw_deg - pair[0].yaw_deg).abs()
                )));
            }
        }
        if self.n_cal < 1 {
            return Err(Error::Config("n_cal must be at least 1".into()));
        }
        if self.v_sat_thresh_v <= 0.0 {
            return Err(Error::Config("v_sat_thresh must be positive".into()));
        }
        if self.landing_speed_m_s <= 0.0 || self.uav_tau_s <= 0.0 {
            return Err(Error::Config("landing speed and tau must be positive".into()));
        }
        if self.unmodeled_gain_scale <= 0.0 {
            return Err(Error::Config("unmodeled gain scale must be positive".into()));
        }
        if let Some(f) = &self.saturation_fault {
            if f.anchor >= 4 {
                return Err(Error::Config("saturation fault anchor index out of range".into()));
            }
        }
        Ok(())
    }
}

fn sp(t_s: f64, x_m: f64, y_m: f64, z_m: f64) -> SetpointWaypoint {
    SetpointWaypoint { t_s, x_m, y_m, z_m }
}

fn wp(t_s: f64, x_m: f64, y_m: f64, yaw_deg: f64) -> PoseWaypoint {
    PoseWaypoint {
        t_s,
        x_m,
        y_m,
        yaw_deg,
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// UGV pose at time `t`: C1 interpolation of the configured waypoints,
/// constant before the first and after the last.
pub fn ugv_pose_at(cfg: &ScenarioConfig, t: f64) -> Result<Pose> {
    if t < 0.0 || t > cfg.duration_s {
        return Err(Error::TimeOutOfRange {
            t,
            duration: cfg.duration_s,
        });
    }
    let path = &cfg.ugv_path;
    debug_assert!(!path.is_empty());
    let (x, y, yaw_deg) = if path.len() == 1 || t <= path[0].t_s {
        (path[0].x_m, path[0].y_m, path[0].yaw_deg)
    } else if t >= path.last().unwrap().t_s {
        let l = path.last().unwrap();
        (l.x_m, l.y_m, l.yaw_deg)
    } else {
        let idx = path.partition_point(|w| w.t_s <= t) - 1;
        let (a, b) = (&path[idx], &path[idx + 1]);
        let s = smoothstep((t - a.t_s) / (b.t_s - a.t_s));
        (
            a.x_m + s * (b.x_m - a.x_m),
            a.y_m + s * (b.y_m - a.y_m),
            a.yaw_deg + s * (b.yaw_deg - a.yaw_deg),
        )
    };
    Ok(Pose::from_xy_yaw(
        x,
        y,
        cfg.deck_height_m,
        yaw_deg.to_radians(),
    ))
}

/// Mission phase at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissionPhase {
    PreTakeoff,
    Flight,
    Landing,
}

/// Commanded reference in `{B}`: smoothstep through the mission setpoints,
/// then a constant-rate descent to the pad.
pub fn reference_at(cfg: &ScenarioConfig, t: f64) -> (Vec3, MissionPhase) {
    let sps = &cfg.setpoints;
    if t <= sps[0].t_s {
        let f = &sps[0];
        return (Vec3::new(f.x_m, f.y_m, f.z_m), MissionPhase::PreTakeoff);
    }
    if t >= sps.last().unwrap().t_s {
        let l = sps.last().unwrap();
        // Command the descent slightly through the deck so contact actually
        // occurs; touchdown detection stops the descent.
        let z = (l.z_m - cfg.landing_speed_m_s * (t - l.t_s)).max(-0.05);
        return (Vec3::new(l.x_m, l.y_m, z), MissionPhase::Landing);
    }
    let idx = sps.partition_point(|w| w.t_s <= t) - 1;
    let (a, b) = (&sps[idx], &sps[idx + 1]);
    let s = smoothstep((t - a.t_s) / (b.t_s - a.t_s));
    (
        Vec3::new(
            a.x_m + s * (b.x_m - a.x_m),
            a.y_m + s * (b.y_m - a.y_m),
            a.z_m + s * (b.z_m - a.z_m),
        ),
        MissionPhase::Flight,
    )
}

/// Proportional-derivative velocity command toward the setpoint, saturated
/// horizontally and vertically.
pub fn uav_controller(
    est: &crate::fusion::EkfState,
    setpoint_b: &Vec3,
    params: &ControllerParams,
) -> Vec3 {
    let err = setpoint_b - est.position;
    let mut cmd = params.kp * err - params.kd * est.velocity;
    let xy = (cmd.x * cmd.x + cmd.y * cmd.y).sqrt();
    if xy > params.max_xy_m_s {
        let k = params.max_xy_m_s / xy;
        cmd.x *= k;
        cmd.y *= k;
    }
    cmd.z = cmd.z.clamp(-params.max_z_m_s, params.max_z_m_s);
    cmd
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Takeoff,
    Touchdown,
    GeofenceBreach,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// One base-rate log sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t_s: f64,
    pub ugv_x_w: f64,
    pub ugv_y_w: f64,
    pub ugv_yaw_rad: f64,
    pub truth_w: Vec3,
    pub truth_b: Vec3,
    pub ref_b: Vec3,
    pub est_b: Vec3,
    pub est_vel: Vec3,
    pub cmd: Vec3,
    pub tof_raw_m: f64,
    pub tof_alt_m: f64,
    pub mi_fresh: bool,
    pub airborne: bool,
}

/// Time-aligned record of one simulated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub dt_s: f64,
    pub rows: Vec<LogRow>,
    pub mi: Vec<MiEstimate>,
    pub events: Vec<Event>,
    pub coefficients: CalibrationCoefficients,
}

impl TrialLog {
    pub fn event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn touchdown_row(&self) -> Option<&LogRow> {
        let e = self.event(EventKind::Touchdown)?;
        self.rows
            .iter()
            .min_by(|a, b| (a.t_s - e.t_s).abs().total_cmp(&(b.t_s - e.t_s).abs()))
    }

    /// CSV export: one row per base timestep.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "t_s,ugv_x_w,ugv_y_w,ugv_yaw_rad,\
             truth_x_w,truth_y_w,truth_z_w,truth_x_b,truth_y_b,truth_z_b,\
             ref_x_b,ref_y_b,ref_z_b,est_x_b,est_y_b,est_z_b,\
             est_vx,est_vy,est_vz,cmd_vx,cmd_vy,cmd_vz,\
             tof_raw_m,tof_alt_m,mi_fresh,airborne"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.t_s,
                r.ugv_x_w,
                r.ugv_y_w,
                r.ugv_yaw_rad,
                r.truth_w.x,
                r.truth_w.y,
                r.truth_w.z,
                r.truth_b.x,
                r.truth_b.y,
                r.truth_b.z,
                r.ref_b.x,
                r.ref_b.y,
                r.ref_b.z,
                r.est_b.x,
                r.est_b.y,
                r.est_b.z,
                r.est_vel.x,
                r.est_vel.y,
                r.est_vel.z,
                r.cmd.x,
                r.cmd.y,
                r.cmd.z,
                r.tof_raw_m,
                r.tof_alt_m,
                r.mi_fresh as u8,
                r.airborne as u8,
            )?;
        }
        Ok(())
    }
}

/// Deterministic per-trial noise source.
struct TrialRng {
    rng: ChaCha8Rng,
    std_normal: Normal<f64>,
}

impl TrialRng {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            std_normal: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    fn normal(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            // keep the draw so noise settings do not shift the stream
            let _ = self.std_normal.sample(&mut self.rng);
            return 0.0;
        }
        self.std_normal.sample(&mut self.rng) * sigma
    }

    fn uniform_angle(&mut self) -> f64 {
        self.rng.gen_range(0.0..std::f64::consts::TAU)
    }

    fn next_seed(&mut self) -> u64 {
        self.rng.gen()
    }
}

fn calibration_episode_internal(
    cfg: &ScenarioConfig,
    rng: &mut TrialRng,
) -> Result<CalibrationCoefficients> {
    let x_ref = Vec3::zeros();
    let mut truth = forward_voltages(&x_ref, &Vec3::z(), &cfg.layout, &cfg.rx_coil, &cfg.chain)?;
    for v in truth.iter_mut() {
        *v *= cfg.unmodeled_gain_scale;
    }
    let phases: [f64; 4] = std::array::from_fn(|_| rng.uniform_angle());
    let frames: Result<Vec<_>> = (0..cfg.n_cal)
        .map(|_| {
            synthesize_frame(
                &truth,
                &cfg.layout.frequencies(),
                &phases,
                &cfg.adc,
                cfg.noise.adc_noise_sigma_v,
                rng.next_seed(),
            )
        })
        .collect();
    calibrate(
        &frames?,
        &x_ref,
        &Pose::identity(),
        &cfg.layout,
        &cfg.rx_coil,
        &cfg.chain,
        &cfg.adc,
        cfg.v_sat_thresh_v,
    )
}

/// Stand-alone static calibration episode (UAV parked at the frame origin,
/// level attitude): synthesizes `n_cal` frames and identifies the gains.
pub fn calibration_episode(cfg: &ScenarioConfig, seed: u64) -> Result<CalibrationCoefficients> {
    cfg.validate()?;
    let mut rng = TrialRng::new(seed);
    calibration_episode_internal(cfg, &mut rng)
}

/// Run one mission with freshly identified calibration coefficients.
pub fn run_trial(cfg: &ScenarioConfig) -> Result<TrialLog> {
    run_trial_with(cfg, None)
}

/// Run one mission, reusing `coeffs` when supplied (calibration is not
/// repeated between missions).
pub fn run_trial_with(
    cfg: &ScenarioConfig,
    coeffs: Option<&CalibrationCoefficients>,
) -> Result<TrialLog> {
    cfg.validate()?;
    let mut rng = TrialRng::new(cfg.seed);
    let coefficients = match coeffs {
        Some(c) => {
            c.validate()?;
            c.clone()
        }
        None => calibration_episode_internal(cfg, &mut rng)?,
    };

    // Per-trial constants.
    let phases: [f64; 4] = std::array::from_fn(|_| rng.uniform_angle());
    let frequencies = cfg.layout.frequencies();
    let geofence = crate::metrics::GEOFENCE_M;
    let n_steps = (cfg.duration_s / BASE_DT_S).round() as usize;

    // Truth state.
    let ugv0 = ugv_pose_at(cfg, 0.0)?;
    let mut truth_p_w = transform_point(&ugv0, &Vec3::zeros());
    let mut truth_v_w = Vec3::zeros();
    let mut airborne = false;
    let mut landed_offset_b: Vec3 = Vec3::zeros();

    // Estimation state.
    let mut fuser = Fuser::new(Vec3::zeros(), 0.0, cfg.ekf.to_config());
    fuser.innovation_gate_d2 = cfg.ekf.innovation_gate_d2;
    let mut mi_rt = MiRuntime::new(Vec3::zeros());
    let mut flow_bias = Vec3::zeros();
    let mut no_active_streak = 0usize;

    let mut rows: Vec<LogRow> = Vec::with_capacity(n_steps);
    let mut mi_log: Vec<MiEstimate> = Vec::new();
    let mut events: Vec<Event> = Vec::new();
    let mut last_tof_raw = 0.0f64;
    let mut last_tof_alt = 0.0f64;

    let deck_half_x = crate::geometry::DECK_SIZE_X_M / 2.0;
    let deck_half_y = crate::geometry::DECK_SIZE_Y_M / 2.0;

    for k in 0..n_steps {
        let t = k as f64 * BASE_DT_S;
        let ugv = ugv_pose_at(cfg, t)?;
        let ugv_inv = ugv.inverse();
        let (ref_b, phase) = reference_at(cfg, t);

        // --- Truth propagation -------------------------------------------
        let mut cmd = Vec3::zeros();
        if airborne {
            cmd = uav_controller(&fuser.state, &ref_b, &cfg.controller);
            // The command is issued in the estimator's axes; with a level
            // UAV and bounded UGV yaw it maps to the world frame directly.
            truth_v_w += (cmd - truth_v_w) * (BASE_DT_S / cfg.uav_tau_s);
            truth_p_w += truth_v_w * BASE_DT_S;
        } else {
            // Parked: ride the deck at the landed offset.
            truth_p_w = transform_point(&ugv, &landed_offset_b);
            truth_v_w = Vec3::zeros();
        }
        let truth_b = transform_point(&ugv_inv, &truth_p_w);

        // Takeoff: leave the deck as soon as the reference lifts.
        if !airborne && phase == MissionPhase::Flight && ref_b.z > 0.01 {
            airborne = true;
            events.push(Event {
                t_s: t,
                kind: EventKind::Takeoff,
                detail: String::new(),
            });
        }

        // --- Sensors and estimation --------------------------------------
        // Flow odometry: world-frame velocity plus bias random walk.
        flow_bias.x += rng.normal(cfg.noise.flow_bias_drift) * BASE_DT_S.sqrt();
        flow_bias.y += rng.normal(cfg.noise.flow_bias_drift) * BASE_DT_S.sqrt();
        let v_meas = Vec3::new(
            truth_v_w.x + flow_bias.x + rng.normal(cfg.noise.flow_velocity_sigma_m_s),
            truth_v_w.y + flow_bias.y + rng.normal(cfg.noise.flow_velocity_sigma_m_s),
            truth_v_w.z + rng.normal(cfg.noise.flow_velocity_sigma_m_s),
        );
        fuser.predict(v_meas, BASE_DT_S, t)?;

        if k % TOF_DECIMATION == 0 {
            // Surface under the UAV: deck inside the pad rectangle, floor
            // outside it.
            let over_deck = truth_b.x.abs() <= deck_half_x && truth_b.y.abs() <= deck_half_y;
            let surface_z = if over_deck { cfg.deck_height_m } else { 0.0 };
            let raw = (truth_p_w.z - surface_z + rng.normal(cfg.noise.tof_sigma_m)).max(0.0);
            last_tof_raw = raw;
            last_tof_alt = fuser.update_tof_raw(raw, TOF_DECIMATION as f64 * BASE_DT_S, t)?;
        }

        let mut mi_fresh = false;
        if k % MI_DECIMATION == 0 && !cfg.disable_mi {
            // True received amplitudes from the forward model at the true
            // relative pose; level attitude keeps the receiver normal at +z.
            // Inside the dipole-validity radius of a coil the real induced
            // voltage rails the chain, so synthesize a clipping amplitude.
            let mut amplitudes = [0.0f64; 4];
            for (i, a) in amplitudes.iter_mut().enumerate() {
                *a = match crate::magnetics::anchor_voltage(
                    &cfg.layout,
                    i,
                    &truth_b,
                    &Vec3::z(),
                    &cfg.rx_coil,
                    &cfg.chain,
                ) {
                    Ok(v) => (v * cfg.unmodeled_gain_scale).min(10.0 * cfg.adc.full_scale_v),
                    Err(_) => 10.0 * cfg.adc.full_scale_v,
                };
            }
            if let Some(fault) = &cfg.saturation_fault {
                if t >= fault.t_start_s && t < fault.t_end_s {
                    amplitudes[fault.anchor] = fault.forced_amplitude_v;
                }
            }
            let frame = synthesize_frame(
                &amplitudes,
                &frequencies,
                &phases,
                &cfg.adc,
                cfg.noise.adc_noise_sigma_v,
                rng.next_seed(),
            )?;
            let raw = extract_amplitudes(&frame, &frequencies, &cfg.adc, cfg.v_sat_thresh_v)?;
            // The solver sees the attitude estimate, not truth.
            let tilt_x = rng.normal(cfg.noise.attitude_sigma_rad);
            let tilt_y = rng.normal(cfg.noise.attitude_sigma_rad);
            let n_est = Pose::from_rpy(tilt_x, tilt_y, 0.0).rotate(&Vec3::z());

            // Warm-start from the fused state (the previous EKF estimate),
            // clamped into the search volume.
            let warm = MiEstimate::initial(cfg.solver.bounds.clamp(&fuser.state.position));
            match mi_rt.step_from(
                &warm,
                &raw,
                &coefficients,
                &n_est,
                &cfg.layout,
                &cfg.rx_coil,
                &cfg.chain,
                &cfg.solver,
                t,
            ) {
                Ok(est) => {
                    no_active_streak = 0;
                    if est.accepted {
                        fuser.update_position(est.position_b, t)?;
                    }
                    mi_fresh = true;
                    mi_log.push(est);
                }
                Err(Error::NoActiveAnchors) => {
                    no_active_streak += 1;
                }
                Err(other) => return Err(other),
            }

            if mi_rt.consecutive_rejections >= DIVERGENCE_ABORT_CYCLES
                || no_active_streak >= DIVERGENCE_ABORT_CYCLES
            {
                events.push(Event {
                    t_s: t,
                    kind: EventKind::Abort,
                    detail: if no_active_streak >= DIVERGENCE_ABORT_CYCLES {
                        "signal loss: all anchors saturated".into()
                    } else {
                        "estimator divergence: sustained outlier rejection".into()
                    },
                });
            }
        }

        // --- Supervision --------------------------------------------------
        let tracking_err = (truth_b - ref_b).norm();
        if airborne && tracking_err > geofence {
            events.push(Event {
                t_s: t,
                kind: EventKind::GeofenceBreach,
                detail: format!("instantaneous error {tracking_err:.3} m"),
            });
        }

        // Touchdown: descent commanded and the true altitude reaches the deck.
        let mut touched_down = false;
        if airborne && phase == MissionPhase::Landing && truth_b.z <= 0.0 {
            airborne = false;
            touched_down = true;
            landed_offset_b = Vec3::new(truth_b.x, truth_b.y, 0.0);
            truth_p_w = transform_point(&ugv, &landed_offset_b);
            events.push(Event {
                t_s: t,
                kind: EventKind::Touchdown,
                detail: format!("planar offset ({:.3}, {:.3}) m", truth_b.x, truth_b.y),
            });
        }

        rows.push(LogRow {
            t_s: t,
            ugv_x_w: ugv.position.x,
            ugv_y_w: ugv.position.y,
            ugv_yaw_rad: ugv.yaw(),
            truth_w: truth_p_w,
            truth_b: if touched_down { landed_offset_b } else { truth_b },
            ref_b,
            est_b: fuser.state.position,
            est_vel: fuser.state.velocity,
            cmd,
            tof_raw_m: last_tof_raw,
            tof_alt_m: last_tof_alt,
            mi_fresh,
            airborne: airborne || touched_down,
        });

        if touched_down
            || events
                .iter()
                .any(|e| matches!(e.kind, EventKind::GeofenceBreach | EventKind::Abort))
        {
            break;
        }
    }

    Ok(TrialLog {
        kind: cfg.kind,
        seed: cfg.seed,
        dt_s: BASE_DT_S,
        rows,
        mi: mi_log,
        events,
        coefficients,
    })
}

/// Run the same scenario across seeds (in parallel; trials share no state)
/// and aggregate the per-trial reports.
pub fn run_batch(base: &ScenarioConfig, seeds: &[u64]) -> Result<(Vec<TrialLog>, BatchReport)> {
    let logs: Result<Vec<TrialLog>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            run_trial(&cfg)
        })
        .collect();
    let logs = logs?;
    let report = batch_report(&logs, &base.layout)?;
    Ok((logs, report))
}
