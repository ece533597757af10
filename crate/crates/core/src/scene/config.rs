//! JSON scene description used by the command-line tools.

use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{fixtures, JointSynthesis, SceneConfig, TrajectoryScript};
use crate::geometry::{self, ObjectModel, ObjectState, TaxelGrid, Vec3, QUATERNION_NORM_TOL};
use crate::sensor::SensorConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// 2 x 8 taxels over a 37 mm x 96 mm palm.
    #[default]
    Canonical,
    /// Grid JSON file, relative paths resolved against the scene file.
    File { path: PathBuf },
    Inline { grid: TaxelGrid },
}

fn default_points() -> usize {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectSpec {
    /// 6.5 cm x 22.2 cm, 108 g.
    CanonicalCylinder {
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        seed: u64,
    },
    Cylinder {
        radius: f64,
        length: f64,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        seed: u64,
    },
    Box {
        size: Vec3,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        seed: u64,
    },
    Hammer {
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Point-cloud text file.
    File { path: PathBuf },
}

impl ObjectSpec {
    pub fn build(&self, base: &Path) -> Result<ObjectModel> {
        match self {
            ObjectSpec::CanonicalCylinder { points, seed } => fixtures::make_canonical_cylinder(*points, *seed),
            ObjectSpec::Cylinder { radius, length, points, seed } => {
                fixtures::make_cylinder(*radius, *length, *points, *seed)
            }
            ObjectSpec::Box { size, points, seed } => fixtures::make_box(*size, *points, *seed),
            ObjectSpec::Hammer { points, seed } => fixtures::make_hammer(*points, *seed),
            ObjectSpec::File { path } => geometry::load_object(base.join(path)),
        }
    }

    /// Resting pose on the skin plane for fixtures; origin for files.
    fn default_state(&self) -> ObjectState {
        match self {
            ObjectSpec::CanonicalCylinder { .. } => fixtures::lying_on_palm(fixtures::CANONICAL_CYLINDER_RADIUS),
            ObjectSpec::Cylinder { radius, .. } => fixtures::lying_on_palm(*radius),
            ObjectSpec::Box { size, .. } => {
                ObjectState::at_rest(Vec3::new(0.0, 0.0, 0.5 * size.z), UnitQuaternion::identity())
            }
            ObjectSpec::Hammer { .. } => ObjectState::at_rest(Vec3::new(0.0, 0.0, 0.032), UnitQuaternion::identity()),
            ObjectSpec::File { .. } => ObjectState::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position: Vec3,
    /// `[w, x, y, z]`
    #[serde(default = "identity")]
    pub orientation: [f64; 4],
}

fn identity() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn d_sim_rate() -> f64 {
    super::DEFAULT_SIM_RATE
}
fn d_control_rate() -> f64 {
    super::DEFAULT_CONTROL_RATE
}
fn d_steps() -> usize {
    super::DEFAULT_EPISODE_STEPS
}
fn d_margin() -> f64 {
    super::DEFAULT_DROP_MARGIN
}

/// Serializable form of [`SceneConfig`]. All lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(default)]
    pub grid: GridSpec,
    pub object: ObjectSpec,
    #[serde(default)]
    pub initial: Option<PoseSpec>,
    pub script: TrajectoryScript,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default = "d_sim_rate")]
    pub sim_rate: f64,
    #[serde(default = "d_control_rate")]
    pub control_rate: f64,
    #[serde(default = "d_steps")]
    pub episode_steps: usize,
    #[serde(default)]
    pub hand_tilt_deg: f64,
    #[serde(default)]
    pub tilt_bias_gain: f64,
    #[serde(default = "d_margin")]
    pub drop_margin: f64,
    #[serde(default)]
    pub joints: JointSynthesis,
    #[serde(default)]
    pub initial_jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneFile {
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let file: SceneFile = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((file, base))
    }

    /// Builds the scene, resolving relative paths against `base`.
    pub fn build(&self, base: &Path) -> Result<SceneConfig> {
        let grid = match &self.grid {
            GridSpec::Canonical => TaxelGrid::canonical(),
            GridSpec::File { path } => geometry::load_grid(base.join(path))?,
            GridSpec::Inline { grid } => grid.clone(),
        };
        let object = self.object.build(base)?;
        let initial_state = match &self.initial {
            Some(p) => {
                let [w, x, y, z] = p.orientation;
                let q = Quaternion::new(w, x, y, z);
                if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
                    return Err(Error::InvalidState("initial orientation is not a unit quaternion".into()));
                }
                ObjectState::at_rest(p.position, UnitQuaternion::new_unchecked(q))
            }
            None => self.object.default_state(),
        };
        let cfg = SceneConfig {
            grid,
            object,
            initial_state,
            script: self.script.clone(),
            sensor: self.sensor,
            sim_rate: self.sim_rate,
            control_rate: self.control_rate,
            episode_steps: self.episode_steps,
            hand_tilt_deg: self.hand_tilt_deg,
            tilt_bias_gain: self.tilt_bias_gain,
            drop_margin: self.drop_margin,
            joints: self.joints,
            initial_jitter: self.initial_jitter,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
