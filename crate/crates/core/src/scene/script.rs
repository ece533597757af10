use std::f64::consts::PI;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::geometry::{Vec3, QUATERNION_NORM_TOL};
use crate::{Error, Result};

/// A world-frame pose pinned to a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub position: Vec3,
    /// `[w, x, y, z]`
    #[serde(default = "identity_wxyz")]
    pub orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TimedPose {
    pub fn rotation(&self) -> Result<UnitQuaternion<f64>> {
        let [w, x, y, z] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::InvalidConfig(format!("waypoint at t={} has a non-unit quaternion", self.t)));
        }
        Ok(UnitQuaternion::new_unchecked(q))
    }
}

/// Prescribed object motion, as a twist over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryScript {
    /// Constant linear and angular velocity.
    ConstantSlide { linear: Vec3, angular: Vec3 },
    /// Per-axis sinusoidal excursion of `amplitude` (m) with `period` (s) on
    /// top of a constant `transport` velocity. Position follows
    /// `transport * t + amplitude * sin(2 pi t / period)`.
    PeriodicGait { amplitude: Vec3, period: f64, transport: Vec3 },
    /// Piecewise-constant twist that visits each pose at its time.
    Waypoints { poses: Vec<TimedPose> },
}

impl TrajectoryScript {
    pub fn validate(&self, duration: f64) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        match self {
            TrajectoryScript::ConstantSlide { linear, angular } => {
                if !finite(linear) || !finite(angular) {
                    return Err(Error::InvalidConfig("slide twist is not finite".into()));
                }
            }
            TrajectoryScript::PeriodicGait { amplitude, period, transport } => {
                if !(*period > 0.0) || !period.is_finite() || !finite(amplitude) || !finite(transport) {
                    return Err(Error::InvalidConfig("gait needs a positive period and finite amplitudes".into()));
                }
            }
            TrajectoryScript::Waypoints { poses } => {
                if poses.len() < 2 {
                    return Err(Error::InvalidConfig("waypoint script needs at least two poses".into()));
                }
                if poses[0].t > 0.0 {
                    return Err(Error::InvalidConfig("first waypoint must be at t <= 0".into()));
                }
                if poses.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return Err(Error::InvalidConfig("waypoint times must increase strictly".into()));
                }
                let last = poses[poses.len() - 1].t;
                if last < duration {
                    return Err(Error::InvalidConfig(format!(
                        "waypoints end at {last} s but the episode lasts {duration} s"
                    )));
                }
                for p in poses {
                    p.rotation()?;
                }
            }
        }
        Ok(())
    }

    /// Linear and angular velocity (world frame) at time `t`.
    pub fn twist_at(&self, t: f64) -> (Vec3, Vec3) {
        match self {
            TrajectoryScript::ConstantSlide { linear, angular } => (*linear, *angular),
            TrajectoryScript::PeriodicGait { amplitude, period, transport } => {
                let w = 2.0 * PI / period;
                (transport + amplitude * (w * (w * t).cos()), Vec3::zeros())
            }
            TrajectoryScript::Waypoints { poses } => {
                let k = poses.partition_point(|p| p.t <= t).clamp(1, poses.len() - 1);
                let (a, b) = (&poses[k - 1], &poses[k]);
                let dt = b.t - a.t;
                let v = (b.position - a.position) / dt;
                let w = match (a.rotation(), b.rotation()) {
                    (Ok(qa), Ok(qb)) => (qb * qa.inverse()).scaled_axis() / dt,
                    _ => Vec3::zeros(),
                };
                (v, w)
            }
        }
    }

    /// Repeat period of the motion, if it has one.
    pub fn period(&self) -> Option<f64> {
        match self {
            TrajectoryScript::PeriodicGait { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// Pose the script starts from, if it pins one.
    pub fn initial_pose(&self) -> Option<&TimedPose> {
        match self {
            TrajectoryScript::Waypoints { poses } => poses.first(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gait_velocity_is_derivative_of_position() {
        let s = TrajectoryScript::PeriodicGait {
            amplitude: Vec3::new(0.01, 0.0, 0.001),
            period: 2.0,
            transport: Vec3::new(0.002, 0.0, 0.0),
        };
        let pos = |t: f64| Vec3::new(0.002 * t + 0.01 * (PI * t).sin(), 0.0, 0.001 * (PI * t).sin());
        for t in [0.0, 0.3, 1.1, 5.7] {
            let h = 1e-6;
            let fd = (pos(t + h) - pos(t - h)) / (2.0 * h);
            assert!((s.twist_at(t).0 - fd).norm() < 1e-8);
        }
        assert_eq!(s.period(), Some(2.0));
    }

    #[test]
    fn waypoint_twist() {
        let rot = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), 0.5);
        let q = rot.quaternion();
        let s = TrajectoryScript::Waypoints {
            poses: vec![
                TimedPose { t: 0.0, position: Vec3::zeros(), orientation: identity_wxyz() },
                TimedPose { t: 2.0, position: Vec3::new(0.02, 0.0, 0.0), orientation: [q.w, q.i, q.j, q.k] },
                TimedPose { t: 4.0, position: Vec3::new(0.02, 0.0, 0.0), orientation: [q.w, q.i, q.j, q.k] },
            ],
        };
        s.validate(4.0).unwrap();
        assert!(s.validate(5.0).is_err());
        let (v, w) = s.twist_at(1.0);
        assert!((v - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
        assert!((w - Vec3::new(0.0, 0.0, 0.25)).norm() < 1e-12);
        let (v, w) = s.twist_at(3.0);
        assert_eq!(v, Vec3::zeros());
        assert!(w.norm() < 1e-12);
        // past the end holds the last segment
        assert_eq!(s.twist_at(10.0).0, Vec3::zeros());
    }

    #[test]
    fn validation() {
        let bad = TrajectoryScript::PeriodicGait { amplitude: Vec3::zeros(), period: 0.0, transport: Vec3::zeros() };
        assert!(bad.validate(1.0).is_err());
        let json = r#"{"kind":"constant_slide","linear":[0.01,0,0],"angular":[0,0,0]}"#;
        let s: TrajectoryScript = serde_json::from_str(json).unwrap();
        assert_eq!(s.twist_at(3.0).0, Vec3::new(0.01, 0.0, 0.0));
    }
}
