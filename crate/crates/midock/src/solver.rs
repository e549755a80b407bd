//! The inverse magnetic problem: box-constrained Nelder-Mead minimization of
//! the amplitude residual with warm start, saturation exclusion, and outlier
//! rejection.
//!
//! The cost is the sum of squared differences between the dipole-model
//! voltages and the calibrated measurements over the active anchor set.
//! Each cycle warm-starts the simplex at the previous accepted estimate, and
//! a solution jumping further than the outlier threshold is rejected in
//! favor of the previous fix.

use serde::{Deserialize, Serialize};

use crate::calibration::{apply_calibration, CalibrationCoefficients};
use crate::dsp::SpectralAmplitudes;
use crate::error::{Error, Result};
use crate::geometry::{AnchorLayout, Vec3};
use crate::magnetics::{anchor_voltage, CoilParams, ReceiverChain, MIN_RANGE_M};

/// Axis-aligned search volume; candidate vertices are clamped to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl SearchBox {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|i| self.min[i] >= self.max[i]) {
            return Err(Error::Config("search box min must be below max".into()));
        }
        Ok(())
    }
}

impl Default for SearchBox {
    fn default() -> Self {
        // The MI working range tops out around a meter; the flight volume for
        // docking sits above the deck plane.
        Self {
            min: Vec3::new(-1.0, -1.0, 0.0),
            max: Vec3::new(1.0, 1.0, 1.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub bounds: SearchBox,
    /// Edge length of the initial simplex around the warm start (m).
    pub initial_simplex_scale: f64,
    /// Terminate when the simplex diameter falls below this (m).
    pub tol_x: f64,
    /// Terminate when the cost spread across the simplex falls below this (V^2).
    pub tol_f: f64,
    pub max_iters: usize,
    /// Reject solutions further than this from the previous accepted fix (m).
    pub outlier_delta: f64,
    /// Anchors whose raw amplitude falls below this carry no usable
    /// information (the dipole null region) and are excluded from the cost
    /// exactly like saturated ones. Zero disables the gate.
    pub min_amplitude_v: f64,
    /// Fewer active anchors than this leaves the position underdetermined;
    /// the cycle is skipped instead of solving on a degenerate manifold.
    pub min_active_anchors: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            bounds: SearchBox::default(),
            initial_simplex_scale: 0.02,
            tol_x: 1e-4,
            tol_f: 1e-12,
            max_iters: 200,
            outlier_delta: 0.30,
            min_amplitude_v: 0.0,
            min_active_anchors: 1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.tol_x <= 0.0 || self.tol_f <= 0.0 || self.initial_simplex_scale <= 0.0 {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.outlier_delta <= 0.0 {
            return Err(Error::Config("outlier_delta must be positive".into()));
        }
        Ok(())
    }
}

/// A timestamped position fix plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub position_b: Vec3,
    /// Residual cost at the returned solution (V^2).
    pub residual: f64,
    /// 0-based indices of the anchors that contributed to the cost.
    pub active_anchors: Vec<usize>,
    pub accepted: bool,
    pub iterations: usize,
    pub timestamp_s: f64,
}

impl MiEstimate {
    /// Seed estimate for the first runtime cycle: the calibration pose.
    pub fn initial(position_b: Vec3) -> Self {
        Self {
            position_b,
            residual: 0.0,
            active_anchors: vec![0, 1, 2, 3],
            accepted: true,
            iterations: 0,
            timestamp_s: 0.0,
        }
    }
}

/// Penalty assigned to anchors whose separation violates dipole validity:
/// large, finite, and growing with penetration depth so the simplex is
/// pushed back out of the invalid region.
fn near_field_penalty(separation_m: f64) -> f64 {
    1e6 * (1.0 + (MIN_RANGE_M - separation_m).max(0.0) / MIN_RANGE_M)
}

/// Sum of squared model-vs-measurement residuals over the active anchors.
pub fn cost(
    x: &Vec3,
    v_meas: &[f64; 4],
    active: &[usize],
    rx_normal_b: &Vec3,
    layout: &AnchorLayout,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
) -> f64 {
    debug_assert!(!active.is_empty());
    let mut total = 0.0;
    for &i in active {
        match anchor_voltage(layout, i, x, rx_normal_b, rx_coil, chain) {
            Ok(v_model) => {
                let r = v_model - v_meas[i];
                total += r * r;
            }
            Err(nf) => total += near_field_penalty(nf.separation_m),
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct NmOutcome {
    pub x: Vec3,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard Nelder-Mead simplex descent in 3D with box constraints enforced
/// by clamping every candidate vertex.
///
/// Terminates when the simplex diameter drops below `tol_x`, the cost spread
/// drops below `tol_f`, or `max_iters` is reached (returned non-converged).
pub fn nelder_mead<F: FnMut(&Vec3) -> f64>(
    mut objective: F,
    x0: Vec3,
    opts: &SolverOptions,
) -> NmOutcome {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let clamp = |p: &Vec3| opts.bounds.clamp(p);
    let start = clamp(&x0);

    // Orthogonal initial simplex; flip a leg inward when it would clamp onto
    // the start vertex at a box face.
    let mut vertices: Vec<Vec3> = vec![start];
    for axis in 0..3 {
        let mut v = start;
        v[axis] += opts.initial_simplex_scale;
        if v[axis] > opts.bounds.max[axis] {
            v[axis] = start[axis] - opts.initial_simplex_scale;
        }
        vertices.push(clamp(&v));
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| objective(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Order best..worst.
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted: Vec<Vec3> = order.iter().map(|&i| vertices[i]).collect();
        let sorted_vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        vertices = sorted;
        values = sorted_vals;

        let diameter = vertices[1..]
            .iter()
            .map(|v| (v - vertices[0]).norm())
            .fold(0.0, f64::max);
        let spread = values[3] - values[0];
        if diameter < opts.tol_x || spread < opts.tol_f {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        let centroid = (vertices[0] + vertices[1] + vertices[2]) / 3.0;
        let reflected = clamp(&(centroid + ALPHA * (centroid - vertices[3])));
        let f_reflected = objective(&reflected);

        if f_reflected < values[0] {
            let expanded = clamp(&(centroid + GAMMA * (centroid - vertices[3])));
            let f_expanded = objective(&expanded);
            if f_expanded < f_reflected {
                vertices[3] = expanded;
                values[3] = f_expanded;
            } else {
                vertices[3] = reflected;
                values[3] = f_reflected;
            }
        } else if f_reflected < values[2] {
            vertices[3] = reflected;
            values[3] = f_reflected;
        } else {
            let (contracted, f_against) = if f_reflected < values[3] {
                (clamp(&(centroid + RHO * (reflected - centroid))), f_reflected)
            } else {
                (clamp(&(centroid + RHO * (vertices[3] - centroid))), values[3])
            };
            let f_contracted = objective(&contracted);
            if f_contracted < f_against {
                vertices[3] = contracted;
                values[3] = f_contracted;
            } else {
                for i in 1..4 {
                    vertices[i] = clamp(&(vertices[0] + SIGMA * (vertices[i] - vertices[0])));
                    values[i] = objective(&vertices[i]);
                }
            }
        }
    }

    NmOutcome {
        x: vertices[0],
        f: values[0],
        iterations,
        converged,
    }
}

/// One runtime estimation cycle: calibrate the raw amplitudes, drop saturated
/// anchors, warm-start the simplex at the previous accepted fix, and apply
/// outlier rejection against it.
///
/// On rejection the previous position is returned with `accepted = false`;
/// the residual and iteration count still describe the rejected solve.
#[allow(clippy::too_many_arguments)]
pub fn estimate_position(
    raw: &SpectralAmplitudes,
    coeffs: &CalibrationCoefficients,
    prev: &MiEstimate,
    rx_normal_b: &Vec3,
    layout: &AnchorLayout,
    rx_coil: &CoilParams,
    chain: &ReceiverChain,
    opts: &SolverOptions,
    timestamp_s: f64,
) -> Result<MiEstimate> {
    let active: Vec<usize> = (0..4)
        .filter(|&i| !raw.saturated[i] && raw.amplitude_v[i] >= opts.min_amplitude_v)
        .collect();
    if active.len() < opts.min_active_anchors.max(1) {
        return Err(Error::NoActiveAnchors);
    }
    let v_meas = apply_calibration(raw, coeffs);

    let objective =
        |x: &Vec3| cost(x, &v_meas, &active, rx_normal_b, layout, rx_coil, chain);
    let outcome = nelder_mead(objective, prev.position_b, opts);

    let accepted = (outcome.x - prev.position_b).norm() < opts.outlier_delta;
    Ok(MiEstimate {
        position_b: if accepted { outcome.x } else { prev.position_b },
        residual: outcome.f,
        active_anchors: active,
        accepted,
        iterations: outcome.iterations,
        timestamp_s,
    })
}

/// Owns the warm-start state across cycles and counts consecutive rejections
/// so a supervisor can react to sustained divergence.
#[derive(Debug, Clone)]
pub struct MiRuntime {
    prev: MiEstimate,
    pub consecutive_rejections: usize,
}

impl MiRuntime {
    pub fn new(initial_position_b: Vec3) -> Self {
        Self {
            prev: MiEstimate::initial(initial_position_b),
            consecutive_rejections: 0,
        }
    }

    pub fn last(&self) -> &MiEstimate {
        &self.prev
    }

    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        raw: &SpectralAmplitudes,
        coeffs: &CalibrationCoefficients,
        rx_normal_b: &Vec3,
        layout: &AnchorLayout,
        rx_coil: &CoilParams,
        chain: &ReceiverChain,
        opts: &SolverOptions,
        timestamp_s: f64,
    ) -> Result<MiEstimate> {
        let prev = self.prev.clone();
        self.step_from(&prev, raw, coeffs, rx_normal_b, layout, rx_coil, chain, opts, timestamp_s)
    }

    /// One cycle warm-started from an externally supplied previous estimate,
    /// normally the fused EKF state: its ToF-backed altitude keeps the warm
    /// start in the correct basin where the centerline amplitude curve folds
    /// at the field null.
    #[allow(clippy::too_many_arguments)]
    pub fn step_from(
        &mut self,
        prev: &MiEstimate,
        raw: &SpectralAmplitudes,
        coeffs: &CalibrationCoefficients,
        rx_normal_b: &Vec3,
        layout: &AnchorLayout,
        rx_coil: &CoilParams,
        chain: &ReceiverChain,
        opts: &SolverOptions,
        timestamp_s: f64,
    ) -> Result<MiEstimate> {
        let estimate = estimate_position(
            raw, coeffs, prev, rx_normal_b, layout, rx_coil, chain, opts, timestamp_s,
        )?;
        if estimate.accepted {
            self.consecutive_rejections = 0;
            self.prev = estimate.clone();
        } else {
            self.consecutive_rejections += 1;
        }
        Ok(estimate)
    }
}
