//! Trial metrics: 3D and axis-wise RMSE, success classification against the
//! safety geofence, and touchdown accuracy relative to the landing pad.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{AnchorLayout, Vec3};
use crate::sim::{EventKind, ScenarioKind, TrialLog};

/// Instantaneous true-vs-reference error bound whose violation fails a trial.
pub const GEOFENCE_M: f64 = 0.5;

/// Root-mean-square of the 3D error between two time-aligned series.
pub fn rmse_3d(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            a: est.len(),
            b: gt.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::Config("rmse over empty series".into()));
    }
    let sum: f64 = est
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

/// Per-axis RMSE; the components recombine to the 3D value by Pythagoras.
pub fn axiswise_rmse(est: &[Vec3], gt: &[Vec3]) -> Result<[f64; 3]> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            a: est.len(),
            b: gt.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::Config("rmse over empty series".into()));
    }
    let mut sums = [0.0f64; 3];
    for (a, b) in est.iter().zip(gt.iter()) {
        for (i, s) in sums.iter_mut().enumerate() {
            *s += (a[i] - b[i]).powi(2);
        }
    }
    Ok(std::array::from_fn(|i| (sums[i] / est.len() as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    Geofence,
    Abort,
}

/// Success rule on a pure error series: failure iff any instantaneous error
/// exceeds the geofence or an abort occurred.
pub fn classify_error_series(
    errors: &[f64],
    aborted: bool,
    geofence_m: f64,
) -> (bool, Option<FailureReason>) {
    if aborted {
        return (false, Some(FailureReason::Abort));
    }
    if errors.iter().any(|e| *e > geofence_m) {
        return (false, Some(FailureReason::Geofence));
    }
    (true, None)
}

/// Classify a trial: instantaneous true-position-vs-reference error against
/// the geofence over the airborne portion, plus any abort event.
pub fn classify_success(log: &TrialLog, geofence_m: f64) -> (bool, Option<FailureReason>) {
    let errors: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.airborne)
        .map(|r| (r.truth_b - r.ref_b).norm())
        .collect();
    let aborted = log.event(EventKind::Abort).is_some();
    classify_error_series(&errors, aborted, geofence_m)
}

/// Planar distance from the true touchdown point to the pad center, and
/// whether it landed inside the marked pad (boundary inclusive).
pub fn touchdown_error(log: &TrialLog, layout: &AnchorLayout) -> Result<(f64, bool)> {
    let row = log.touchdown_row().ok_or(Error::NotLanded)?;
    let dx = row.truth_b.x - layout.pad_center_b.x;
    let dy = row.truth_b.y - layout.pad_center_b.y;
    let planar = (dx * dx + dy * dy).sqrt();
    Ok((planar, planar <= layout.pad_radius_m))
}

/// Quantitative summary of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Headline RMSE: estimation error for static scenarios, whole-trajectory
    /// tracking error against the commanded reference for S2/S3.
    pub rmse_3d_m: Option<f64>,
    pub rmse_axiswise_m: Option<[f64; 3]>,
    /// Estimate-vs-truth RMSE over the airborne portion.
    pub rmse_est_gt_m: Option<f64>,
    /// Truth-vs-commanded-reference RMSE over the airborne portion.
    pub rmse_tracking_m: Option<f64>,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    pub touchdown_error_m: Option<f64>,
    pub touchdown_inside_pad: Option<bool>,
    pub mi_cycles: usize,
    pub mi_accepted: usize,
}

/// Build the report for one trial log.
pub fn trial_report(log: &TrialLog, layout: &AnchorLayout) -> Result<TrialReport> {
    let est: Vec<Vec3> = log
        .rows
        .iter()
        .filter(|r| r.airborne)
        .map(|r| r.est_b)
        .collect();
    let truth: Vec<Vec3> = log
        .rows
        .iter()
        .filter(|r| r.airborne)
        .map(|r| r.truth_b)
        .collect();
    let reference: Vec<Vec3> = log
        .rows
        .iter()
        .filter(|r| r.airborne)
        .map(|r| r.ref_b)
        .collect();

    let (rmse_est_gt, rmse_tracking, axis_est_gt, axis_tracking) = if truth.is_empty() {
        (None, None, None, None)
    } else {
        (
            Some(rmse_3d(&est, &truth)?),
            Some(rmse_3d(&truth, &reference)?),
            Some(axiswise_rmse(&est, &truth)?),
            Some(axiswise_rmse(&truth, &reference)?),
        )
    };

    // Dynamic scenarios report whole-trajectory tracking against the
    // commanded relative reference; static scenarios report estimation error.
    let dynamic = matches!(
        log.kind,
        ScenarioKind::S2Linear | ScenarioKind::S3Composite
    );
    let (rmse_3d_m, rmse_axiswise_m) = if dynamic {
        (rmse_tracking, axis_tracking)
    } else {
        (rmse_est_gt, axis_est_gt)
    };

    let (success, failure_reason) = classify_success(log, GEOFENCE_M);
    let (touchdown_error_m, touchdown_inside_pad) = match touchdown_error(log, layout) {
        Ok((d, inside)) => (Some(d), Some(inside)),
        Err(Error::NotLanded) => (None, None),
        Err(e) => return Err(e),
    };

    Ok(TrialReport {
        kind: log.kind,
        seed: log.seed,
        rmse_3d_m,
        rmse_axiswise_m,
        rmse_est_gt_m: rmse_est_gt,
        rmse_tracking_m: rmse_tracking,
        success,
        failure_reason,
        touchdown_error_m,
        touchdown_inside_pad,
        mi_cycles: log.mi.len(),
        mi_accepted: log.mi.iter().filter(|e| e.accepted).count(),
    })
}

/// Aggregate over a batch of trials of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub trials: Vec<TrialReport>,
    /// Mean headline RMSE over successful trials (failed trials carry no
    /// RMSE in the aggregate, matching the results-table convention).
    pub mean_rmse_m: Option<f64>,
    pub success_rate: f64,
    pub n_trials: usize,
    pub n_success: usize,
    pub n_touchdown_inside_pad: usize,
    pub mean_touchdown_error_m: Option<f64>,
}

pub fn batch_report(logs: &[TrialLog], layout: &AnchorLayout) -> Result<BatchReport> {
    let trials: Result<Vec<TrialReport>> = logs.iter().map(|l| trial_report(l, layout)).collect();
    let trials = trials?;
    let n_trials = trials.len();
    let n_success = trials.iter().filter(|t| t.success).count();
    let rmses: Vec<f64> = trials
        .iter()
        .filter(|t| t.success)
        .filter_map(|t| t.rmse_3d_m)
        .collect();
    let mean_rmse_m = if rmses.is_empty() {
        None
    } else {
        Some(rmses.iter().sum::<f64>() / rmses.len() as f64)
    };
    let tds: Vec<f64> = trials.iter().filter_map(|t| t.touchdown_error_m).collect();
    let mean_touchdown_error_m = if tds.is_empty() {
        None
    } else {
        Some(tds.iter().sum::<f64>() / tds.len() as f64)
    };
    Ok(BatchReport {
        n_touchdown_inside_pad: trials
            .iter()
            .filter(|t| t.touchdown_inside_pad == Some(true))
            .count(),
        trials,
        mean_rmse_m,
        success_rate: if n_trials == 0 {
            0.0
        } else {
            n_success as f64 / n_trials as f64
        },
        n_trials,
        n_success,
        mean_touchdown_error_m,
    })
}

impl BatchReport {
    /// Results table: one row per trial, mean row, success-rate footer.
    pub fn write_table_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "trial,seed,rmse_cm,success,touchdown_cm,inside_pad")?;
        for (i, t) in self.trials.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i + 1,
                t.seed,
                t.rmse_3d_m
                    .map(|v| format!("{:.2}", v * 100.0))
                    .unwrap_or_else(|| "FAIL".into()),
                if t.success { "ok" } else { "FAIL" },
                t.touchdown_error_m
                    .map(|v| format!("{:.2}", v * 100.0))
                    .unwrap_or_default(),
                t.touchdown_inside_pad
                    .map(|v| if v { "1" } else { "0" })
                    .unwrap_or(""),
            )?;
        }
        writeln!(
            w,
            "mean,,{},,{},",
            self.mean_rmse_m
                .map(|v| format!("{:.2}", v * 100.0))
                .unwrap_or_else(|| "N/A".into()),
            self.mean_touchdown_error_m
                .map(|v| format!("{:.2}", v * 100.0))
                .unwrap_or_default(),
        )?;
        writeln!(w, "sc,,{:.0}%,,,", self.success_rate * 100.0)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_identical_series_is_zero() {
        let s = vec![Vec3::new(0.1, 0.2, 0.3); 10];
        assert_relative_eq!(rmse_3d(&s, &s).unwrap(), 0.0);
        assert_eq!(axiswise_rmse(&s, &s).unwrap(), [0.0; 3]);
    }

    #[test]
    fn rmse_constant_offset() {
        let gt = vec![Vec3::zeros(); 20];
        let est: Vec<Vec3> = gt.iter().map(|p| p + Vec3::new(0.03, 0.0, 0.0)).collect();
        assert_relative_eq!(rmse_3d(&est, &gt).unwrap(), 0.03, epsilon = 1e-12);
        let axis = axiswise_rmse(&est, &gt).unwrap();
        assert_relative_eq!(axis[0], 0.03, epsilon = 1e-12);
        assert_relative_eq!(axis[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rmse_alternating_signs() {
        let gt = vec![Vec3::zeros(); 8];
        let est: Vec<Vec3> = (0..8)
            .map(|i| Vec3::new(if i % 2 == 0 { 0.04 } else { -0.04 }, 0.0, 0.0))
            .collect();
        assert_relative_eq!(rmse_3d(&est, &gt).unwrap(), 0.04, epsilon = 1e-12);
    }

    #[test]
    fn rmse_offset_only_on_z() {
        let gt = vec![Vec3::zeros(); 5];
        let est: Vec<Vec3> = gt.iter().map(|p| p + Vec3::new(0.0, 0.0, 0.07)).collect();
        let axis = axiswise_rmse(&est, &gt).unwrap();
        assert_eq!(axis[0], 0.0);
        assert_eq!(axis[1], 0.0);
        assert_relative_eq!(axis[2], 0.07, epsilon = 1e-12);
    }

    #[test]
    fn rmse_length_mismatch() {
        let a = vec![Vec3::zeros(); 3];
        let b = vec![Vec3::zeros(); 4];
        assert!(matches!(
            rmse_3d(&a, &b),
            Err(Error::LengthMismatch { a: 3, b: 4 })
        ));
    }

    #[test]
    fn classify_boundary_cases() {
        let (ok, why) = classify_error_series(&[0.1, 0.49, 0.2], false, GEOFENCE_M);
        assert!(ok && why.is_none());

        let (ok, why) = classify_error_series(&[0.1, 0.51], false, GEOFENCE_M);
        assert!(!ok);
        assert_eq!(why, Some(FailureReason::Geofence));

        let (ok, why) = classify_error_series(&[0.1], true, GEOFENCE_M);
        assert!(!ok);
        assert_eq!(why, Some(FailureReason::Abort));
    }

    #[test]
    fn touchdown_boundary_inclusive() {
        use crate::sim::{run_trial, NoiseConfig, ScenarioConfig, ScenarioKind};
        // Build a real log, then judge synthetic touchdown points through the
        // same accessor the report uses.
        let mut cfg = ScenarioConfig::template(ScenarioKind::S1Hover);
        cfg.noise = NoiseConfig::zero();
        let mut log = run_trial(&cfg).unwrap();
        let layout = AnchorLayout::standard();

        let td_t = log.event(EventKind::Touchdown).unwrap().t_s;
        let idx = log
            .rows
            .iter()
            .position(|r| (r.t_s - td_t).abs() < 1e-9)
            .unwrap();

        for (offset, expect_inside) in [
            (0.0, true),
            (layout.pad_radius_m, true), // boundary inclusive
            (0.15, false),
        ] {
            log.rows[idx].truth_b = Vec3::new(offset, 0.0, 0.0);
            let (d, inside) = touchdown_error(&log, &layout).unwrap();
            assert_relative_eq!(d, offset, epsilon = 1e-12);
            assert_eq!(inside, expect_inside, "offset {offset}");
        }
    }

    #[test]
    fn touchdown_requires_landing() {
        use crate::sim::{run_trial, ScenarioConfig, ScenarioKind};
        let mut cfg = ScenarioConfig::template(ScenarioKind::S1Hover);
        cfg.noise = crate::sim::NoiseConfig::zero();
        cfg.duration_s = 5.0; // ends before landing
        let log = run_trial(&cfg).unwrap();
        assert!(matches!(
            touchdown_error(&log, &AnchorLayout::standard()),
            Err(Error::NotLanded)
        ));
    }

    proptest! {
        // rmse is symmetric in its arguments.
        #[test]
        fn rmse_symmetry(pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..50)) {
            let a: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let b: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[2], p[0], p[1])).collect();
            prop_assert!((rmse_3d(&a, &b).unwrap() - rmse_3d(&b, &a).unwrap()).abs() < 1e-15);
        }

        // Axis components recombine: rmse^2 = sum of squared axis rmse.
        #[test]
        fn rmse_pythagoras(
            a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..50),
            b_seed in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..50),
        ) {
            let n = a.len().min(b_seed.len());
            let a: Vec<Vec3> = a[..n].iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let b: Vec<Vec3> = b_seed[..n].iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let total = rmse_3d(&a, &b).unwrap();
            let axis = axiswise_rmse(&a, &b).unwrap();
            let recombined = (axis[0].powi(2) + axis[1].powi(2) + axis[2].powi(2)).sqrt();
            prop_assert!((total - recombined).abs() < 1e-12);
        }

        // rmse is invariant under a common rigid transform of both series.
        #[test]
        fn rmse_rigid_invariance(
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..30),
            yaw in 0.0f64..std::f64::consts::TAU,
            t in prop::array::uniform3(-2.0f64..2.0),
        ) {
            use crate::geometry::{transform_point, Pose};
            let a: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let b: Vec<Vec3> = pts.iter().map(|p| Vec3::new(p[1], p[2], p[0])).collect();
            let pose = Pose::from_xy_yaw(t[0], t[1], t[2], yaw);
            let ta: Vec<Vec3> = a.iter().map(|p| transform_point(&pose, p)).collect();
            let tb: Vec<Vec3> = b.iter().map(|p| transform_point(&pose, p)).collect();
            prop_assert!((rmse_3d(&a, &b).unwrap() - rmse_3d(&ta, &tb).unwrap()).abs() < 1e-9);
        }

        // Shrinking every error sample can never turn success into failure.
        #[test]
        fn classify_is_monotone(
            errors in prop::collection::vec(0.0f64..1.0, 1..100),
            shrink in 0.0f64..1.0,
        ) {
            let (ok_before, _) = classify_error_series(&errors, false, GEOFENCE_M);
            let smaller: Vec<f64> = errors.iter().map(|e| e * shrink).collect();
            let (ok_after, _) = classify_error_series(&smaller, false, GEOFENCE_M);
            prop_assert!(!ok_before || ok_after);
        }
    }
}
