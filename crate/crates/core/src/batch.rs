//! Batch signal evaluation for external environments.
//!
//! Objects and grids are registered once and referenced by handle (their
//! index) from each scene. Every entry point is a plain loop over the
//! single-scene engine, so results are identical to calling
//! [`sensor::grid_signals`] per scene.

use nalgebra::{Quaternion, UnitQuaternion};
use rayon::prelude::*;

use crate::geometry::{ObjectModel, ObjectState, TaxelGrid, Vec3};
use crate::scene;
use crate::sensor::{self, GridSignals, SensorConfig};
use crate::{Error, Result};

/// One scene of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneInput {
    pub object: usize,
    pub grid: usize,
    pub state: ObjectState,
    pub sensor: SensorConfig,
}

#[derive(Debug, Clone, Copy)]
pub struct BatchSignalRequest<'a> {
    pub objects: &'a [ObjectModel],
    pub grids: &'a [TaxelGrid],
    pub scenes: &'a [SceneInput],
}

/// Per-scene state arrays in structure-of-arrays form, as a host runtime
/// would hand them over.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateArrays<'a> {
    pub object: &'a [usize],
    pub grid: &'a [usize],
    pub position: &'a [[f64; 3]],
    /// `[w, x, y, z]`
    pub orientation: &'a [[f64; 4]],
    pub linear_velocity: &'a [[f64; 3]],
    pub angular_velocity: &'a [[f64; 3]],
}

impl StateArrays<'_> {
    /// Zips the arrays into scenes sharing one sensor configuration. On a
    /// length mismatch the error names the first index missing from some
    /// array.
    pub fn to_scenes(&self, sensor: SensorConfig) -> Result<Vec<SceneInput>> {
        let lens = [
            self.object.len(),
            self.grid.len(),
            self.position.len(),
            self.orientation.len(),
            self.linear_velocity.len(),
            self.angular_velocity.len(),
        ];
        let n = lens[0];
        if let Some(&short) = lens.iter().filter(|&&l| l != n).min() {
            let index = short.min(n);
            return Err(Error::InvalidConfig(format!("state arrays have lengths {lens:?}")).in_batch(index));
        }
        Ok((0..n)
            .map(|i| {
                let [w, x, y, z] = self.orientation[i];
                SceneInput {
                    object: self.object[i],
                    grid: self.grid[i],
                    state: ObjectState {
                        position: Vec3::from(self.position[i]),
                        orientation: Quaternion::new(w, x, y, z),
                        linear_velocity: Vec3::from(self.linear_velocity[i]),
                        angular_velocity: Vec3::from(self.angular_velocity[i]),
                    },
                    sensor,
                }
            })
            .collect())
    }
}

fn eval_one(req: &BatchSignalRequest, i: usize, scratch: &mut Vec<Vec3>) -> Result<GridSignals> {
    let s = &req.scenes[i];
    let object = req
        .objects
        .get(s.object)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown object handle {}", s.object)).in_batch(i))?;
    let grid = req
        .grids
        .get(s.grid)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown grid handle {}", s.grid)).in_batch(i))?;
    sensor::grid_signals_with_buffer(grid, object, &s.state, &s.sensor, scratch).map_err(|e| e.in_batch(i))
}

/// Evaluates every scene in order on the calling thread.
pub fn batch_grid_signals(req: &BatchSignalRequest) -> Result<Vec<GridSignals>> {
    let mut scratch = Vec::new();
    (0..req.scenes.len()).map(|i| eval_one(req, i, &mut scratch)).collect()
}

/// As [`batch_grid_signals`], spread over the rayon pool. Output order and
/// values do not depend on the thread count. If several scenes fail, the
/// lowest failing index is reported.
pub fn batch_grid_signals_par(req: &BatchSignalRequest) -> Result<Vec<GridSignals>> {
    let results: Vec<Result<GridSignals>> = (0..req.scenes.len())
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| eval_one(req, i, scratch))
        .collect();
    results.into_iter().collect()
}

/// A set of independently stepped objects over one grid.
#[derive(Debug, Clone)]
pub struct Env {
    pub grid: TaxelGrid,
    pub object: ObjectModel,
    pub sensor: SensorConfig,
    pub states: Vec<ObjectState>,
}

impl Env {
    pub fn new(grid: TaxelGrid, object: ObjectModel, sensor: SensorConfig, states: Vec<ObjectState>) -> Result<Self> {
        for (i, s) in states.iter().enumerate() {
            s.validate().map_err(|e| e.in_batch(i))?;
        }
        Ok(Self { grid, object, sensor, states })
    }

    /// Overwrites the twist of every state. `twists` must match the state count.
    pub fn set_twists(&mut self, twists: &[(Vec3, Vec3)]) -> Result<()> {
        if twists.len() != self.states.len() {
            let index = twists.len().min(self.states.len());
            return Err(Error::InvalidConfig(format!(
                "{} twists for {} states",
                twists.len(),
                self.states.len()
            ))
            .in_batch(index));
        }
        for (s, (v, w)) in self.states.iter_mut().zip(twists) {
            s.linear_velocity = *v;
            s.angular_velocity = *w;
        }
        Ok(())
    }
}

/// Advances every state by `dt` with [`scene::step`] and returns the new
/// signals.
pub fn env_step(env: &mut Env, dt: f64) -> Result<Vec<GridSignals>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {dt}")));
    }
    for s in &mut env.states {
        *s = scene::step(s, dt);
    }
    let mut scratch = Vec::with_capacity(env.object.point_count());
    env.states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            sensor::grid_signals_with_buffer(&env.grid, &env.object, s, &env.sensor, &mut scratch)
                .map_err(|e| e.in_batch(i))
        })
        .collect()
}

/// Orientation helper for building state arrays.
pub fn wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::fixtures;

    fn setup() -> (Vec<ObjectModel>, Vec<TaxelGrid>) {
        (
            vec![
                fixtures::make_canonical_cylinder(512, 1).unwrap(),
                fixtures::make_box(Vec3::new(0.05, 0.05, 0.05), 512, 2).unwrap(),
            ],
            vec![TaxelGrid::canonical()],
        )
    }

    #[test]
    fn empty_and_single() {
        let (objects, grids) = setup();
        let req = BatchSignalRequest { objects: &objects, grids: &grids, scenes: &[] };
        assert!(batch_grid_signals(&req).unwrap().is_empty());
        let state = fixtures::lying_on_palm(0.0325).with_twist(Vec3::new(0.02, 0.0, 0.0), Vec3::zeros());
        let scene = SceneInput { object: 0, grid: 0, state, sensor: SensorConfig::default() };
        let req = BatchSignalRequest { objects: &objects, grids: &grids, scenes: &[scene] };
        let single = sensor::grid_signals(&grids[0], &objects[0], &state, &SensorConfig::default()).unwrap();
        assert_eq!(batch_grid_signals(&req).unwrap(), vec![single.clone()]);
        assert_eq!(batch_grid_signals_par(&req).unwrap(), vec![single]);
    }

    #[test]
    fn shape_mismatch_names_index() {
        let pos = [[0.0; 3]; 3];
        let quat = [[1.0, 0.0, 0.0, 0.0]; 3];
        let arrays = StateArrays {
            object: &[0, 0, 0],
            grid: &[0, 0, 0],
            position: &pos,
            orientation: &quat[..2],
            linear_velocity: &pos,
            angular_velocity: &pos,
        };
        let err = arrays.to_scenes(SensorConfig::default()).unwrap_err();
        assert_eq!(err.batch_index(), Some(2));
        assert_eq!(err.code(), "TXS-E006-BATCH");
    }

    #[test]
    fn bad_item_reports_its_index() {
        let (objects, grids) = setup();
        let good = SceneInput {
            object: 0,
            grid: 0,
            state: ObjectState::default(),
            sensor: SensorConfig::default(),
        };
        let mut bad = good;
        bad.state.orientation = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let mut unknown = good;
        unknown.object = 7;
        let scenes = [good, bad, good, unknown];
        let req = BatchSignalRequest { objects: &objects, grids: &grids, scenes: &scenes };
        for r in [batch_grid_signals(&req), batch_grid_signals_par(&req)] {
            let err = r.unwrap_err();
            assert_eq!(err.batch_index(), Some(1));
            match err {
                Error::Batch { source, .. } => assert_eq!(source.code(), "TXS-E001-INVALID-STATE"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn env_step_mirrors_scene_step() {
        let (objects, grids) = setup();
        let s0 = fixtures::lying_on_palm(0.0325).with_twist(Vec3::new(0.01, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.1));
        let mut env = Env::new(grids[0].clone(), objects[0].clone(), SensorConfig::default(), vec![s0; 3]).unwrap();
        let out = env_step(&mut env, 0.05).unwrap();
        let expect_state = scene::step(&s0, 0.05);
        assert_eq!(env.states[2], expect_state);
        let expect = sensor::grid_signals(&grids[0], &objects[0], &expect_state, &SensorConfig::default()).unwrap();
        assert_eq!(out[1], expect);
        assert!(env_step(&mut env, 0.0).is_err());
        assert_eq!(env.set_twists(&[(Vec3::zeros(), Vec3::zeros())]).unwrap_err().batch_index(), Some(1));
    }
}
