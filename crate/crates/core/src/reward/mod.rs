//! In-hand translation reward and task metrics.
//!
//! Eight per-tick terms, each multiplied by its scale and summed:
//!
//! | term   | raw value                                   | scale |
//! |--------|---------------------------------------------|-------|
//! | iht    | `-(x - x_goal)^2`                           | 700   |
//! | rotp   | `-(x_left_end - x_right_end)^2`             | 500   |
//! | goal   | `1 if |x - x_goal| < eps else 0`            | 10    |
//! | drop   | `min(max(x_drop - x_threshold, -1), 0)`     | 1000  |
//! | pose   | `-||q - q_init||^2`                         | -0.3  |
//! | work   | `-tau . qdot`                               | -2.0  |
//! | torque | `-||tau||^2`                                | -0.1  |
//! | force  | `-1/4 sum (F_i - mu)^2`                     | 500   |
//!
//! `x` is the object position along the task axis except in the drop term,
//! which measures along the drop axis (height by default). Scales are
//! applied with their signs as listed; [`RewardConfig::abs_scales`] uses
//! magnitudes instead.

mod metrics;

pub use metrics::{compute_metrics, compute_trace_metrics, Metrics, DEFAULT_TIMEOUT_S};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scene::{EpisodeTrace, DEFAULT_Q_INIT};
use crate::{Error, Result, NUM_FINGERS, NUM_JOINTS};

/// One value per reward term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub iht: f64,
    pub rotp: f64,
    pub goal: f64,
    pub drop: f64,
    pub pose: f64,
    pub work: f64,
    pub torque: f64,
    pub force: f64,
}

impl RewardTerms {
    pub const NAMES: [&'static str; 8] = ["iht", "rotp", "goal", "drop", "pose", "work", "torque", "force"];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.iht,
            self.rotp,
            self.goal,
            self.drop,
            self.pose,
            self.work,
            self.torque,
            self.force,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        let [iht, rotp, goal, drop, pose, work, torque, force] = a;
        Self {
            iht,
            rotp,
            goal,
            drop,
            pose,
            work,
            torque,
            force,
        }
    }
}

/// Default scales.
pub const DEFAULT_SCALES: RewardTerms = RewardTerms {
    iht: 700.0,
    rotp: 500.0,
    goal: 10.0,
    drop: 1000.0,
    pose: -0.3,
    work: -2.0,
    torque: -0.1,
    force: 500.0,
};

/// Target `mu` of the force-evenness term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceTarget {
    /// Mean of the four fingertip forces at the same tick.
    #[default]
    Mean,
    Constant(f64),
}

fn d_scales() -> RewardTerms {
    DEFAULT_SCALES
}
fn d_epsilon() -> f64 {
    0.01
}
fn d_threshold() -> f64 {
    -crate::scene::DEFAULT_DROP_MARGIN
}
fn d_q_init() -> Option<[f64; NUM_JOINTS]> {
    Some(DEFAULT_Q_INIT)
}
fn d_x() -> Vec3 {
    Vec3::x()
}
fn d_z() -> Vec3 {
    Vec3::z()
}
fn d_ends() -> [Vec3; 2] {
    let h = 0.5 * crate::scene::fixtures::CANONICAL_CYLINDER_LENGTH;
    [Vec3::new(0.0, 0.0, -h), Vec3::new(0.0, 0.0, h)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    #[serde(default = "d_scales")]
    pub scales: RewardTerms,
    /// Goal tolerance (m).
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    /// Drop plane along `drop_axis` (m). Defaults to 5 cm below the skin.
    #[serde(default = "d_threshold")]
    pub x_threshold: f64,
    #[serde(default)]
    pub force_target: ForceTarget,
    #[serde(default = "d_q_init")]
    pub q_init: Option<[f64; NUM_JOINTS]>,
    #[serde(default)]
    pub goal_position: Vec3,
    /// Axis along which iht, goal and rotp measure positions.
    #[serde(default = "d_x")]
    pub task_axis: Vec3,
    #[serde(default = "d_z")]
    pub drop_axis: Vec3,
    /// Left and right object ends in the object frame.
    #[serde(default = "d_ends")]
    pub object_ends: [Vec3; 2],
    #[serde(default)]
    pub abs_scales: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES,
            epsilon: d_epsilon(),
            x_threshold: d_threshold(),
            force_target: ForceTarget::Mean,
            q_init: d_q_init(),
            goal_position: Vec3::zeros(),
            task_axis: Vec3::x(),
            drop_axis: Vec3::z(),
            object_ends: d_ends(),
            abs_scales: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.q_init.is_none() && self.scales.pose != 0.0 {
            return Err(Error::InvalidConfig("pose term needs q_init".into()));
        }
        for (name, axis) in [("task_axis", &self.task_axis), ("drop_axis", &self.drop_axis)] {
            if !((axis.norm() - 1.0).abs() < 1e-9) {
                return Err(Error::InvalidConfig(format!("{name} must be a unit vector")));
            }
        }
        let all = self.scales.to_array();
        if all.iter().chain([&self.x_threshold]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("scales and thresholds must be finite".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let cfg: RewardConfig = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything one tick contributes to the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSnapshot {
    /// Object position (world, m).
    pub position: Vec3,
    /// Left and right ends (world, m).
    pub ends: [Vec3; 2],
    pub q: [f64; NUM_JOINTS],
    pub qdot: [f64; NUM_JOINTS],
    pub tau: Option<[f64; NUM_JOINTS]>,
    pub forces: Option<[f64; NUM_FINGERS]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub raw: RewardTerms,
    pub scaled: RewardTerms,
    pub total: f64,
    /// Torques were missing; work and torque terms are zero.
    pub missing_tau: bool,
    /// Fingertip forces were missing; the force term is zero.
    pub missing_forces: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn reward_terms(snap: &TickSnapshot, cfg: &RewardConfig) -> Result<RewardBreakdown> {
    cfg.validate()?;
    let x = snap.position.dot(&cfg.task_axis);
    let x_goal = cfg.goal_position.dot(&cfg.task_axis);
    let along = |p: &Vec3| p.dot(&cfg.task_axis);

    let iht = -(x - x_goal).powi(2);
    let rotp = -(along(&snap.ends[0]) - along(&snap.ends[1])).powi(2);
    let goal = if ((x - x_goal).powi(2)).sqrt() < cfg.epsilon { 1.0 } else { 0.0 };
    let drop = (snap.position.dot(&cfg.drop_axis) - cfg.x_threshold).clamp(-1.0, 0.0);
    let pose = match &cfg.q_init {
        Some(q0) => {
            let d: Vec<f64> = snap.q.iter().zip(q0).map(|(a, b)| a - b).collect();
            -dot(&d, &d)
        }
        None => 0.0,
    };
    let (work, torque) = match &snap.tau {
        Some(tau) => (-dot(tau, &snap.qdot), -dot(tau, tau)),
        None => (0.0, 0.0),
    };
    let force = match &snap.forces {
        Some(f) => {
            let mu = match cfg.force_target {
                ForceTarget::Mean => f.iter().sum::<f64>() / NUM_FINGERS as f64,
                ForceTarget::Constant(m) => m,
            };
            -0.25 * f.iter().map(|fi| (fi - mu).powi(2)).sum::<f64>()
        }
        None => 0.0,
    };
    let raw = RewardTerms {
        iht,
        rotp,
        goal,
        drop,
        pose,
        work,
        torque,
        force,
    };
    let scales = cfg.scales.to_array();
    let mut scaled = [0.0; 8];
    for (i, r) in raw.to_array().iter().enumerate() {
        let s = if cfg.abs_scales { scales[i].abs() } else { scales[i] };
        scaled[i] = s * r;
    }
    let total = scaled.iter().sum();
    Ok(RewardBreakdown {
        raw,
        scaled: RewardTerms::from_array(scaled),
        total,
        missing_tau: snap.tau.is_none(),
        missing_forces: snap.forces.is_none(),
    })
}

/// Central-difference joint velocities over the trace timestamps, one-sided
/// at the ends. A single tick gets zero velocity.
pub fn joint_velocities(trace: &EpisodeTrace) -> Vec<[f64; NUM_JOINTS]> {
    let n = trace.len();
    let ticks = &trace.ticks;
    (0..n)
        .map(|k| {
            if n < 2 {
                return [0.0; NUM_JOINTS];
            }
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            let dt = ticks[b].t - ticks[a].t;
            let mut qd = [0.0; NUM_JOINTS];
            for j in 0..NUM_JOINTS {
                qd[j] = (ticks[b].q[j] - ticks[a].q[j]) / dt;
            }
            qd
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeReturn {
    pub total: f64,
    pub ticks: Vec<RewardBreakdown>,
}

impl EpisodeReturn {
    /// Per-term sums of the scaled values.
    pub fn term_totals(&self) -> RewardTerms {
        let mut acc = [0.0; 8];
        for b in &self.ticks {
            for (a, v) in acc.iter_mut().zip(b.scaled.to_array()) {
                *a += v;
            }
        }
        RewardTerms::from_array(acc)
    }
}

/// Sums the per-tick reward over a trace.
pub fn episode_return(trace: &EpisodeTrace, cfg: &RewardConfig) -> Result<EpisodeReturn> {
    cfg.validate()?;
    let qdot = joint_velocities(trace);
    let mut ticks = Vec::with_capacity(trace.len());
    let mut total = 0.0;
    for (tick, qd) in trace.ticks.iter().zip(qdot) {
        let snap = TickSnapshot {
            position: tick.state.position,
            ends: [
                tick.state.to_world(&cfg.object_ends[0])?,
                tick.state.to_world(&cfg.object_ends[1])?,
            ],
            q: tick.q,
            qdot: qd,
            tau: tick.tau,
            forces: tick.forces,
        };
        let b = reward_terms(&snap, cfg)?;
        total += b.total;
        ticks.push(b);
    }
    Ok(EpisodeReturn { total, ticks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_goal() -> TickSnapshot {
        TickSnapshot {
            position: Vec3::zeros(),
            ends: [Vec3::new(0.0, -0.1, 0.0), Vec3::new(0.0, 0.1, 0.0)],
            q: DEFAULT_Q_INIT,
            qdot: [0.0; NUM_JOINTS],
            tau: Some([0.0; NUM_JOINTS]),
            forces: Some([2.0; NUM_FINGERS]),
        }
    }

    #[test]
    fn default_scales() {
        assert_eq!(
            RewardConfig::default().scales.to_array(),
            [700.0, 500.0, 10.0, 1000.0, -0.3, -2.0, -0.1, 500.0]
        );
    }

    #[test]
    fn at_goal_only_bonus() {
        let b = reward_terms(&at_goal(), &RewardConfig::default()).unwrap();
        assert_eq!(b.raw.goal, 1.0);
        assert_eq!(b.scaled.goal, 10.0);
        for v in [b.raw.iht, b.raw.rotp, b.raw.drop, b.raw.pose, b.raw.work, b.raw.torque, b.raw.force] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(b.total, 10.0);
    }

    #[test]
    fn drop_clamps() {
        let mut s = at_goal();
        s.position.z = -2.05;
        let b = reward_terms(&s, &RewardConfig::default()).unwrap();
        assert_eq!(b.raw.drop, -1.0);
        assert_eq!(b.scaled.drop, -1000.0);
        s.position.z = 1.0;
        assert_eq!(reward_terms(&s, &RewardConfig::default()).unwrap().raw.drop, 0.0);
    }

    #[test]
    fn iht_arithmetic() {
        let mut s = at_goal();
        s.position.x = 0.1;
        let b = reward_terms(&s, &RewardConfig::default()).unwrap();
        assert!((b.raw.iht + 0.01).abs() < 1e-15);
        assert!((b.scaled.iht + 7.0).abs() < 1e-12);
        assert_eq!(b.raw.goal, 0.0);
    }

    #[test]
    fn missing_channels_are_flagged() {
        let mut s = at_goal();
        s.tau = None;
        s.forces = None;
        let b = reward_terms(&s, &RewardConfig::default()).unwrap();
        assert!(b.missing_tau && b.missing_forces);
        assert_eq!((b.raw.work, b.raw.torque, b.raw.force), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_q_init_is_config_error() {
        let cfg = RewardConfig { q_init: None, ..Default::default() };
        assert!(matches!(reward_terms(&at_goal(), &cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = cfg;
        cfg.scales.pose = 0.0;
        assert_eq!(reward_terms(&at_goal(), &cfg).unwrap().raw.pose, 0.0);
    }

    #[test]
    fn abs_scales_flip_negative_rows() {
        let mut s = at_goal();
        s.tau = Some([1.0; NUM_JOINTS]);
        let lit = reward_terms(&s, &RewardConfig::default()).unwrap();
        let abs = reward_terms(&s, &RewardConfig { abs_scales: true, ..Default::default() }).unwrap();
        assert!((lit.scaled.torque - 1.6).abs() < 1e-12);
        assert!((abs.scaled.torque + 1.6).abs() < 1e-12);
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RewardConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RewardConfig::default());
        let cfg: RewardConfig = serde_json::from_str(r#"{"force_target":{"constant":1.5},"abs_scales":true}"#).unwrap();
        assert_eq!(cfg.force_target, ForceTarget::Constant(1.5));
    }
}
