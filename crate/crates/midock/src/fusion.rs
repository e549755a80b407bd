//! Sensor fusion: a position/velocity EKF fed by flow/inertial odometry,
//! asynchronous MI position fixes, and a step-filtered rangefinder altitude.
//!
//! The filter carries six states (position and velocity in `{B}`); attitude
//! is an external input handled upstream, which reduces the magnetic
//! inversion to position only. Prediction is driven directly by the measured
//! body velocity; MI fixes and the compensated ToF altitude enter as linear
//! measurement updates in Joseph form. Any absolute position or range aiding
//! source (UWB included) can reuse the same update entry points.
//!
//! The ToF channel needs special handling: when the UAV crosses the deck
//! edge the ground reference jumps, and feeding that step to the filter
//! would read as a sudden altitude change. A small state machine watches the
//! raw-range derivative, holds the last compensated altitude through the
//! step, and realigns the baseline so later samples stay continuous.

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub type Cov6 = SMatrix<f64, 6, 6>;

/// Position/velocity filter state in `{B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub covariance: Cov6,
}

impl EkfState {
    pub fn new(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            covariance: Cov6::from_diagonal(&SVector::<f64, 6>::from_element(1e-4)),
        }
    }

    /// Symmetric within tolerance and positive definite (all Cholesky pivots
    /// strictly positive).
    pub fn covariance_is_pd(&self) -> bool {
        let p = self.covariance;
        if (p - p.transpose()).abs().max() > 1e-9 {
            return false;
        }
        p.cholesky().is_some()
    }
}

/// Measurement and process noise configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfConfig {
    /// MI position fix covariance (m^2); the vertical entry is inflated
    /// because z is the least observable axis of a planar anchor layout.
    pub r_mag: Matrix3<f64>,
    /// Compensated ToF altitude variance (m^2).
    pub r_tof: f64,
    /// Continuous-time process noise PSD for the six states.
    pub q_process: Cov6,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            r_mag: Matrix3::from_diagonal(&Vec3::new(0.02f64.powi(2), 0.02f64.powi(2), 0.04f64.powi(2))),
            r_tof: 0.01f64.powi(2),
            q_process: Cov6::from_diagonal(&SVector::<f64, 6>::from_row_slice(&[
                1e-6, 1e-6, 1e-6, 1e-2, 1e-2, 1e-2,
            ])),
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_mag.cholesky().is_none() {
            return Err(Error::Config("r_mag must be positive definite".into()));
        }
        if self.r_tof <= 0.0 {
            return Err(Error::Config("r_tof must be positive".into()));
        }
        // Q may be merely positive semi-definite; require symmetry and
        // non-negative diagonal.
        if (self.q_process - self.q_process.transpose()).abs().max() > 1e-12 {
            return Err(Error::Config("q_process must be symmetric".into()));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut Cov6) {
    *m = (*m + m.transpose()) * 0.5;
}

/// Exact constant-velocity discretization of the continuous process noise:
/// integrating `F(s) Q F(s)^T` over the step keeps prediction consistent
/// under any substepping (two 0.05 s predicts match one 0.1 s predict).
fn discretize_q(q: &Cov6, dt: f64) -> Cov6 {
    let qpp = q.fixed_view::<3, 3>(0, 0).into_owned();
    let qpv = q.fixed_view::<3, 3>(0, 3).into_owned();
    let qvp = q.fixed_view::<3, 3>(3, 0).into_owned();
    let qvv = q.fixed_view::<3, 3>(3, 3).into_owned();

    let dt2 = dt * dt / 2.0;
    let dt3 = dt * dt * dt / 3.0;
    let mut out = Cov6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(qpp * dt + (qpv + qvp) * dt2 + qvv * dt3));
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(qpv * dt + qvv * dt2));
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(qvp * dt + qvv * dt2));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(qvv * dt));
    out
}

/// Propagate with the measured body velocity (already rotated into `{B}`):
/// position dead-reckons on the odometry channel while covariance grows with
/// the constant-velocity transition and the process noise.
pub fn ekf_predict(
    state: &EkfState,
    velocity_meas: Vec3,
    dt: f64,
    cfg: &EkfConfig,
) -> Result<EkfState> {
    if !(velocity_meas.iter().all(|v| v.is_finite()) && dt.is_finite()) {
        return Err(Error::NonFinite("ekf_predict input"));
    }
    if dt <= 0.0 {
        return Err(Error::NonPositive("prediction step dt"));
    }

    let mut f = Cov6::identity();
    f.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(Matrix3::identity() * dt));

    let mut covariance = f * state.covariance * f.transpose() + discretize_q(&cfg.q_process, dt);
    symmetrize(&mut covariance);

    Ok(EkfState {
        position: state.position + velocity_meas * dt,
        velocity: velocity_meas,
        covariance,
    })
}

/// Joseph-form update for a linear measurement `z = H x + v`.
fn joseph_update<const M: usize>(
    state: &EkfState,
    h: &SMatrix<f64, M, 6>,
    z: &SVector<f64, M>,
    r: &SMatrix<f64, M, M>,
) -> Result<EkfState> {
    let x = SVector::<f64, 6>::from_row_slice(&[
        state.position.x,
        state.position.y,
        state.position.z,
        state.velocity.x,
        state.velocity.y,
        state.velocity.z,
    ]);
    let p = state.covariance;

    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
    let k = p * h.transpose() * s_inv;
    let innovation = z - h * x;
    let x_new = x + k * innovation;

    let i_kh = Cov6::identity() - k * h;
    let mut p_new = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    symmetrize(&mut p_new);

    let updated = EkfState {
        position: Vec3::new(x_new[0], x_new[1], x_new[2]),
        velocity: Vec3::new(x_new[3], x_new[4], x_new[5]),
        covariance: p_new,
    };
    if !updated.covariance_is_pd() {
        return Err(Error::Numerical(
            "covariance lost positive definiteness in update".into(),
        ));
    }
    Ok(updated)
}

/// Absolute position update from an accepted MI fix.
pub fn ekf_update_position(state: &EkfState, z: Vec3, cfg: &EkfConfig) -> Result<EkfState> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("position measurement"));
    }
    let mut h = SMatrix::<f64, 3, 6>::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    joseph_update(state, &h, &SVector::<f64, 3>::new(z.x, z.y, z.z), &cfg.r_mag)
}

/// Scalar altitude update from the compensated ToF channel.
pub fn ekf_update_tof(state: &EkfState, compensated_altitude: f64, cfg: &EkfConfig) -> Result<EkfState> {
    if !compensated_altitude.is_finite() {
        return Err(Error::NonFinite("altitude measurement"));
    }
    let mut h = SMatrix::<f64, 1, 6>::zeros();
    h[(0, 2)] = 1.0;
    joseph_update(
        state,
        &h,
        &SVector::<f64, 1>::new(compensated_altitude),
        &SMatrix::<f64, 1, 1>::new(cfg.r_tof),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TofMode {
    Nominal,
    StepHold,
}

/// State machine compensating ground-reference steps in the raw ToF range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TofFilterState {
    pub mode: TofMode,
    /// Reference baseline subtracted from the raw range (m).
    pub baseline_d0: f64,
    pub last_raw: f64,
    /// Raw-range derivative above which a surface change is declared (m/s).
    pub step_threshold: f64,
    /// Last compensated altitude, held through a detected step (m).
    pub hold_value: f64,
}

impl TofFilterState {
    /// Start tracking from the first raw range (UAV parked on the deck).
    pub fn new(initial_raw_m: f64, step_threshold_m_s: f64) -> Self {
        Self {
            mode: TofMode::Nominal,
            baseline_d0: initial_raw_m,
            last_raw: initial_raw_m,
            step_threshold: step_threshold_m_s,
            hold_value: 0.0,
        }
    }
}

/// Default derivative threshold: far above descent speeds, far below the
/// derivative produced by a deck-to-floor reference change.
pub const TOF_STEP_THRESHOLD_M_S: f64 = 2.0;

/// One ToF sample through the step filter.
///
/// Below threshold the surface is continuous and the compensated altitude is
/// `raw - baseline`. At a step the previous compensated value is held and
/// the baseline realigned to the new surface so subsequent nominal samples
/// continue seamlessly.
pub fn tof_step_filter(
    tstate: &TofFilterState,
    raw_d: f64,
    dt: f64,
) -> Result<(f64, TofFilterState)> {
    if raw_d < 0.0 {
        return Err(Error::SensorFault(raw_d));
    }
    if dt <= 0.0 {
        return Err(Error::NonPositive("tof sample dt"));
    }
    let derivative = (raw_d - tstate.last_raw) / dt;
    let mut next = *tstate;
    next.last_raw = raw_d;

    let altitude = if derivative.abs() < tstate.step_threshold {
        next.mode = TofMode::Nominal;
        let alt = raw_d - next.baseline_d0;
        next.hold_value = alt;
        alt
    } else {
        next.mode = TofMode::StepHold;
        // Absorb the jump into the baseline: the held output and the
        // realigned baseline agree, so the next nominal sample is continuous.
        next.baseline_d0 += raw_d - tstate.last_raw;
        next.hold_value
    };
    Ok((altitude, next))
}

/// Timestamp-ordered fusion front end owning the filter and ToF state.
/// Out-of-order measurements are dropped and counted, and MI fixes pass a
/// Mahalanobis innovation gate before entering the filter.
#[derive(Debug, Clone)]
pub struct Fuser {
    pub state: EkfState,
    pub tof: TofFilterState,
    pub cfg: EkfConfig,
    /// Squared-Mahalanobis gate on position innovations; <= 0 disables it.
    pub innovation_gate_d2: f64,
    last_t: f64,
    pub dropped_out_of_order: usize,
    pub gated_updates: usize,
}

impl Fuser {
    pub fn new(initial_position: Vec3, initial_tof_raw: f64, cfg: EkfConfig) -> Self {
        Self {
            state: EkfState::new(initial_position),
            tof: TofFilterState::new(initial_tof_raw, TOF_STEP_THRESHOLD_M_S),
            cfg,
            innovation_gate_d2: 0.0,
            last_t: 0.0,
            dropped_out_of_order: 0,
            gated_updates: 0,
        }
    }

    fn in_order(&mut self, t: f64) -> bool {
        if t < self.last_t {
            self.dropped_out_of_order += 1;
            false
        } else {
            self.last_t = t;
            true
        }
    }

    pub fn predict(&mut self, velocity_meas: Vec3, dt: f64, t: f64) -> Result<()> {
        if !self.in_order(t) {
            return Ok(());
        }
        self.state = ekf_predict(&self.state, velocity_meas, dt, &self.cfg)?;
        Ok(())
    }

    /// Fuse an absolute position fix; returns false when the innovation gate
    /// rejected it.
    pub fn update_position(&mut self, z: Vec3, t: f64) -> Result<bool> {
        if !self.in_order(t) {
            return Ok(false);
        }
        if self.innovation_gate_d2 > 0.0 {
            let p = self.state.covariance.fixed_view::<3, 3>(0, 0).into_owned();
            let s = p + self.cfg.r_mag;
            let innovation = z - self.state.position;
            let d2 = s
                .try_inverse()
                .map(|s_inv| (innovation.transpose() * s_inv * innovation)[(0, 0)])
                .unwrap_or(f64::INFINITY);
            if d2 > self.innovation_gate_d2 {
                self.gated_updates += 1;
                return Ok(false);
            }
        }
        self.state = ekf_update_position(&self.state, z, &self.cfg)?;
        Ok(true)
    }

    pub fn update_tof_raw(&mut self, raw_d: f64, dt: f64, t: f64) -> Result<f64> {
        if !self.in_order(t) {
            return Ok(self.tof.hold_value);
        }
        let (altitude, next) = tof_step_filter(&self.tof, raw_d, dt)?;
        self.tof = next;
        self.state = ekf_update_tof(&self.state, altitude, &self.cfg)?;
        Ok(altitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> EkfConfig {
        EkfConfig::default()
    }

    #[test]
    fn predict_zero_velocity_holds_position_grows_covariance() {
        let s0 = EkfState::new(Vec3::new(0.1, 0.2, 0.3));
        let s1 = ekf_predict(&s0, Vec3::zeros(), 0.1, &cfg()).unwrap();
        assert_relative_eq!(s1.position, s0.position);
        assert!(s1.covariance.trace() > s0.covariance.trace());
        assert!(s1.covariance_is_pd());
    }

    #[test]
    fn predict_integrates_measured_velocity() {
        let s0 = EkfState::new(Vec3::zeros());
        let s1 = ekf_predict(&s0, Vec3::new(1.0, 0.0, 0.0), 0.1, &cfg()).unwrap();
        assert_relative_eq!(s1.position, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(s1.velocity, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn predict_semigroup() {
        let s0 = EkfState::new(Vec3::new(0.1, -0.2, 0.5));
        let v = Vec3::new(0.3, -0.1, 0.05);
        let two_steps = {
            let s = ekf_predict(&s0, v, 0.05, &cfg()).unwrap();
            ekf_predict(&s, v, 0.05, &cfg()).unwrap()
        };
        let one_step = ekf_predict(&s0, v, 0.1, &cfg()).unwrap();
        assert!((two_steps.position - one_step.position).norm() < 1e-9);
        assert!((two_steps.covariance - one_step.covariance).abs().max() < 1e-9);
    }

    #[test]
    fn predict_rejects_non_finite() {
        let s0 = EkfState::new(Vec3::zeros());
        let err = ekf_predict(&s0, Vec3::new(f64::NAN, 0.0, 0.0), 0.1, &cfg());
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn update_uninformative_measurement_is_identity() {
        let mut c = cfg();
        c.r_mag = Matrix3::identity() * 1e12;
        let s0 = EkfState::new(Vec3::new(0.1, 0.2, 0.3));
        let s1 = ekf_update_position(&s0, Vec3::new(5.0, 5.0, 5.0), &c).unwrap();
        assert!((s1.position - s0.position).norm() < 1e-6);
    }

    #[test]
    fn update_exact_measurement_pins_position() {
        let mut c = cfg();
        c.r_mag = Matrix3::identity() * 1e-12;
        let s0 = EkfState::new(Vec3::zeros());
        let z = Vec3::new(0.4, -0.2, 0.6);
        let s1 = ekf_update_position(&s0, z, &c).unwrap();
        assert!((s1.position - z).norm() < 1e-6);
    }

    #[test]
    fn update_equal_variances_means_midpoint() {
        let mut c = cfg();
        let var = 0.05f64.powi(2);
        c.r_mag = Matrix3::identity() * var;
        let mut s0 = EkfState::new(Vec3::zeros());
        s0.covariance = Cov6::from_diagonal(&SVector::<f64, 6>::from_row_slice(&[
            var, var, var, 1e-6, 1e-6, 1e-6,
        ]));
        let z = Vec3::new(0.1, 0.0, 0.0);
        let s1 = ekf_update_position(&s0, z, &c).unwrap();
        assert!((s1.position - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn tof_update_mirrors_position_update_on_z() {
        let mut c = cfg();
        c.r_tof = 1e12;
        let s0 = EkfState::new(Vec3::new(0.0, 0.0, 0.3));
        let s1 = ekf_update_tof(&s0, 5.0, &c).unwrap();
        assert!((s1.position.z - 0.3).abs() < 1e-6);

        c.r_tof = 1e-12;
        let s2 = ekf_update_tof(&s0, 0.7, &c).unwrap();
        assert!((s2.position.z - 0.7).abs() < 1e-6);

        let var = 0.05f64.powi(2);
        c.r_tof = var;
        let mut s3 = EkfState::new(Vec3::zeros());
        s3.covariance[(2, 2)] = var;
        let s4 = ekf_update_tof(&s3, 0.1, &c).unwrap();
        assert!((s4.position.z - 0.05).abs() < 1e-9);
    }

    #[test]
    fn tof_constant_surface_nominal() {
        let mut st = TofFilterState::new(0.20, TOF_STEP_THRESHOLD_M_S);
        // climb to 0.20 happened earlier; track a constant range
        for _ in 0..50 {
            let (alt, next) = tof_step_filter(&st, 0.20, 0.02).unwrap();
            assert_relative_eq!(alt, 0.0, epsilon = 1e-12);
            assert_eq!(next.mode, TofMode::Nominal);
            st = next;
        }
    }

    #[test]
    fn tof_step_is_held_and_baseline_realigned() {
        // Hovering 0.20 m above the deck; the deck edge passes below and the
        // raw range jumps by the 0.30 m deck height in one 0.02 s sample.
        let mut st = TofFilterState::new(0.0, TOF_STEP_THRESHOLD_M_S);
        let mut alts = Vec::new();
        let trace: Vec<f64> = std::iter::repeat(0.20)
            .take(10)
            .chain(std::iter::repeat(0.50).take(10))
            .collect();
        // climb from 0 to 0.20 at 0.5 m/s, well below the step threshold
        for k in 1..=20 {
            let raw = 0.01 * k as f64;
            let (alt, next) = tof_step_filter(&st, raw, 0.02).unwrap();
            st = next;
            alts.push(alt);
        }
        for &raw in &trace {
            let (alt, next) = tof_step_filter(&st, raw, 0.02).unwrap();
            st = next;
            alts.push(alt);
        }
        // No sample-to-sample jump anywhere near the 0.30 m step.
        for w in alts.windows(2) {
            assert!(
                (w[1] - w[0]).abs() < 0.05,
                "discontinuity: {:?}",
                w
            );
        }
        // Output settled at the true 0.20 m altitude despite raw reading 0.50.
        assert_relative_eq!(*alts.last().unwrap(), 0.20, epsilon = 1e-9);
        assert_relative_eq!(st.baseline_d0, 0.30, epsilon = 1e-9);
    }

    #[test]
    fn tof_slow_descent_tracks_normally() {
        let mut st = TofFilterState::new(0.50, TOF_STEP_THRESHOLD_M_S);
        let mut raw = 0.50;
        for _ in 0..40 {
            raw -= 0.2 * 0.02; // 0.2 m/s descent
            let (_, next) = tof_step_filter(&st, raw, 0.02).unwrap();
            assert_eq!(next.mode, TofMode::Nominal);
            st = next;
        }
        assert_relative_eq!(st.hold_value, raw - 0.50, epsilon = 1e-9);
    }

    #[test]
    fn tof_negative_range_is_fault() {
        let st = TofFilterState::new(0.2, TOF_STEP_THRESHOLD_M_S);
        assert!(matches!(
            tof_step_filter(&st, -0.01, 0.02),
            Err(Error::SensorFault(_))
        ));
    }

    #[test]
    fn predict_only_trace_never_decreases() {
        let mut s = EkfState::new(Vec3::zeros());
        let mut last = s.covariance.trace();
        for k in 0..200 {
            s = ekf_predict(&s, Vec3::new(0.1 * (k as f64).sin(), 0.0, 0.0), 0.01, &cfg())
                .unwrap();
            let tr = s.covariance.trace();
            assert!(tr >= last);
            last = tr;
        }
    }

    #[test]
    fn bounded_error_with_periodic_fixes() {
        // 100 Hz predicts with biased odometry, 20 Hz position fixes with
        // bounded error: the position estimate error stays bounded.
        let c = cfg();
        let mut s = EkfState::new(Vec3::zeros());
        let bias = Vec3::new(0.05, -0.03, 0.0);
        let mut truth = Vec3::zeros();
        let v_true = Vec3::new(0.2, 0.0, 0.0);
        let mut worst: f64 = 0.0;
        for k in 0..2000 {
            truth += v_true * 0.01;
            s = ekf_predict(&s, v_true + bias, 0.01, &c).unwrap();
            if k % 5 == 0 {
                let fix = truth + Vec3::new(0.02, -0.01, 0.015); // bounded error
                s = ekf_update_position(&s, fix, &c).unwrap();
            }
            worst = worst.max((s.position - truth).norm());
        }
        assert!(worst < 0.1, "worst error {worst}");
    }

    #[test]
    fn fuser_drops_out_of_order() {
        let mut f = Fuser::new(Vec3::zeros(), 0.0, cfg());
        f.predict(Vec3::zeros(), 0.01, 0.10).unwrap();
        let before = f.state.clone();
        f.update_position(Vec3::new(1.0, 0.0, 0.0), 0.05).unwrap();
        assert_eq!(f.dropped_out_of_order, 1);
        assert_eq!(f.state, before);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Covariance stays symmetric positive definite through arbitrary
        // interleavings of predicts and updates.
        #[test]
        fn covariance_pd_under_interleaving(ops in prop::collection::vec(0u8..3, 1..60)) {
            let c = cfg();
            let mut s = EkfState::new(Vec3::zeros());
            for (k, op) in ops.iter().enumerate() {
                s = match op {
                    0 => ekf_predict(&s, Vec3::new(0.1, -0.2, 0.05), 0.01, &c).unwrap(),
                    1 => ekf_update_position(&s, Vec3::new(0.01 * k as f64, 0.0, 0.3), &c).unwrap(),
                    _ => ekf_update_tof(&s, 0.3, &c).unwrap(),
                };
                prop_assert!(s.covariance_is_pd());
            }
        }

        // Posterior position variance never exceeds the prior (Loewner order
        // restricted to the measured subspace).
        #[test]
        fn update_contracts_position_variance(z in prop::array::uniform3(-0.5f64..0.5)) {
            let c = cfg();
            let mut s = EkfState::new(Vec3::zeros());
            for _ in 0..10 {
                s = ekf_predict(&s, Vec3::zeros(), 0.01, &c).unwrap();
            }
            let prior = s.covariance;
            let post = ekf_update_position(&s, Vec3::new(z[0], z[1], z[2]), &c).unwrap();
            for i in 0..3 {
                prop_assert!(post.covariance[(i, i)] <= prior[(i, i)] + 1e-15);
            }
        }

        // A single surface step of any magnitude up to 0.5 m never produces a
        // compensated jump beyond descent_rate * dt + 1 mm.
        #[test]
        fn tof_continuity_across_steps(step in -0.5f64..0.5, descent in 0.0f64..0.4) {
            prop_assume!(step.abs() > 0.06); // above the per-sample descent delta
            let dt = 0.02;
            let mut st = TofFilterState::new(0.3, TOF_STEP_THRESHOLD_M_S);
            let mut raw = 0.3f64;
            let mut prev_alt = None;
            for k in 0..60 {
                raw = (raw - descent * dt).max(0.0);
                if k == 30 {
                    raw = (raw + step).max(0.0);
                }
                let (alt, next) = tof_step_filter(&st, raw, dt).unwrap();
                if let Some(p) = prev_alt {
                    let jump = (alt - p as f64).abs();
                    prop_assert!(jump <= descent * dt + 1e-3, "jump {} at k {}", jump, k);
                }
                prev_alt = Some(alt);
                st = next;
            }
        }
    }
}
