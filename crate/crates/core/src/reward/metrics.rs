use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scene::EpisodeTrace;

/// Rollouts are judged on their first two minutes.
pub const DEFAULT_TIMEOUT_S: f64 = 120.0;

/// Task metrics of one rollout. Distances and velocities are only reported
/// for successful rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Moved a positive distance along the desired axis within the timeout.
    pub success: bool,
    /// Maximum displacement along the axis (cm).
    pub max_distance_cm: Option<f64>,
    /// Maximum displacement over the time taken to first reach it (cm/s).
    pub avg_velocity_cm_s: Option<f64>,
    /// Seconds from the start until the displacement first turns positive.
    pub time_to_first_motion_s: Option<f64>,
}

/// Metrics of a position series. Displacement is measured from the first
/// sample along `axis` (normalized here), over samples no later than
/// `timeout` seconds after the first.
pub fn compute_metrics(times: &[f64], positions: &[Vec3], axis: &Vec3, timeout: f64) -> Metrics {
    let failed = Metrics {
        success: false,
        max_distance_cm: None,
        avg_velocity_cm_s: None,
        time_to_first_motion_s: None,
    };
    let n = times.len().min(positions.len());
    if n == 0 || !(axis.norm() > 0.0) {
        return failed;
    }
    let axis = axis.normalize();
    let (t0, p0) = (times[0], positions[0]);
    let mut best = 0.0;
    let mut t_best = t0;
    let mut first_motion = None;
    for k in 0..n {
        if times[k] - t0 > timeout {
            break;
        }
        let d = (positions[k] - p0).dot(&axis);
        if d > 0.0 && first_motion.is_none() {
            first_motion = Some(times[k] - t0);
        }
        if d > best {
            best = d;
            t_best = times[k];
        }
    }
    if !(best > 0.0) {
        return failed;
    }
    Metrics {
        success: true,
        max_distance_cm: Some(100.0 * best),
        avg_velocity_cm_s: Some(100.0 * best / (t_best - t0)),
        time_to_first_motion_s: first_motion,
    }
}

pub fn compute_trace_metrics(trace: &EpisodeTrace, axis: &Vec3, timeout: f64) -> Metrics {
    compute_metrics(&trace.times(), &trace.positions(), axis, timeout)
}
