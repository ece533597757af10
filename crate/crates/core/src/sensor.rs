//! Taxel signal model.
//!
//! For each taxel, with penetration sum `P = sum_i P_i` and object point
//! density `D`:
//!
//! ```text
//! S_x = P / D * (v_x + w_x)
//! S_y = P / D * (v_y + w_y)
//! S_z = P / D
//! ```
//!
//! where `v` and `w` are the object's linear and angular velocity. Linear
//! and angular components are added as-is; no length scale is applied to
//! `w`. The continuous signals are then thresholded to `{-1, 0, 1}` for
//! shear and `{0, 1}` for normal, and masked by the active [`Modality`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, penetration_for_grid, ObjectModel, ObjectState, TaxelGrid, Vec3};
use crate::{Error, Result};

/// Continuous 3-axis taxel output, in opaque signal units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RawSignal {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

/// Thresholded taxel output: shear in `{-1, 0, 1}`, normal in `{0, 1}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TernarySignal {
    pub sx: i8,
    pub sy: i8,
    pub sz: i8,
}

impl TernarySignal {
    pub const ZERO: Self = Self { sx: 0, sy: 0, sz: 0 };

    pub fn new(sx: i8, sy: i8, sz: i8) -> Self {
        Self { sx, sy, sz }
    }

    pub fn shear_active(&self) -> bool {
        self.sx != 0 || self.sy != 0
    }
}

/// Sensing-modality ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    /// Signed shear and binary normal.
    #[default]
    Signed3Axis,
    /// Shear magnitude only (`|s_x|`, `|s_y|`) and binary normal.
    Unsigned3Axis,
    /// Signed shear, normal forced to 0.
    SignedShearOnly,
    /// Binary normal, shear forced to 0.
    NormalOnly,
    /// No tactile output at all.
    ProprioOnly,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Signed3Axis,
        Modality::Unsigned3Axis,
        Modality::SignedShearOnly,
        Modality::NormalOnly,
        Modality::ProprioOnly,
    ];

    /// Applies this modality's sign mapping and channel mask.
    pub fn apply(self, s: TernarySignal) -> TernarySignal {
        match self {
            Modality::Signed3Axis => s,
            Modality::Unsigned3Axis => TernarySignal::new(s.sx.abs(), s.sy.abs(), s.sz),
            Modality::SignedShearOnly => TernarySignal::new(s.sx, s.sy, 0),
            Modality::NormalOnly => TernarySignal::new(0, 0, s.sz),
            Modality::ProprioOnly => TernarySignal::ZERO,
        }
    }
}

/// Shear and normal thresholds, in signal units. Both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThresholdRepr", into = "ThresholdRepr")]
pub struct ThresholdConfig {
    shear: f64,
    normal: f64,
}

#[derive(Serialize, Deserialize)]
struct ThresholdRepr {
    shear: f64,
    normal: f64,
}

impl TryFrom<ThresholdRepr> for ThresholdConfig {
    type Error = Error;
    fn try_from(r: ThresholdRepr) -> Result<Self> {
        ThresholdConfig::new(r.shear, r.normal)
    }
}

impl From<ThresholdConfig> for ThresholdRepr {
    fn from(t: ThresholdConfig) -> Self {
        ThresholdRepr {
            shear: t.shear,
            normal: t.normal,
        }
    }
}

impl ThresholdConfig {
    pub fn new(shear: f64, normal: f64) -> Result<Self> {
        if !(shear > 0.0 && shear.is_finite() && normal > 0.0 && normal.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "thresholds must be positive and finite (shear {shear}, normal {normal})"
            )));
        }
        Ok(Self { shear, normal })
    }

    pub fn shear(&self) -> f64 {
        self.shear
    }

    pub fn normal(&self) -> f64 {
        self.normal
    }

    /// Thresholds calibrated on the canonical cylinder fixture sliding over
    /// the canonical grid (6.5 cm x 22.2 cm cylinder, gait speeds of a few
    /// cm/s). Scale them with the object if you change fixtures.
    pub fn canonical_cylinder() -> Self {
        Self {
            shear: 3.0e-10,
            normal: 1.0e-9,
        }
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self::canonical_cylinder()
    }
}

/// How the continuous signal is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorModel {
    /// Extended sensing sphere with velocity-weighted shear.
    #[default]
    Tactile,
    /// Simulator-default style baseline: membership by the collision radius
    /// and shear from the tangential part of the summed penetration vectors,
    /// with no velocity weighting.
    CollisionGeometry,
}

/// Frame in which `(S_x, S_y)` are expressed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalFrame {
    #[default]
    Global,
    /// Re-express the twist in the palm frame first (for tilted palms).
    Palm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub modality: Modality,
    #[serde(default)]
    pub model: SensorModel,
    #[serde(default)]
    pub frame: SignalFrame,
}

/// Continuous signal of one taxel from its penetration sum, the object point
/// density and the object twist.
pub fn raw_signal(penetration_sum: f64, density: f64, v: &Vec3, w: &Vec3) -> Result<RawSignal> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::InvalidModel(format!("point density must be positive, got {density}")));
    }
    if !(penetration_sum >= 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "penetration sum must be non-negative, got {penetration_sum}"
        )));
    }
    let k = penetration_sum / density;
    Ok(RawSignal {
        sx: k * (v.x + w.x),
        sy: k * (v.y + w.y),
        sz: k,
    })
}

fn sign_above(value: f64, threshold: f64) -> i8 {
    if value.abs() > threshold {
        if value > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// Thresholds a continuous signal and applies the modality.
pub fn threshold(raw: &RawSignal, cfg: &ThresholdConfig, modality: Modality) -> TernarySignal {
    let s = TernarySignal {
        sx: sign_above(raw.sx, cfg.shear),
        sy: sign_above(raw.sy, cfg.shear),
        sz: i8::from(raw.sz > cfg.normal),
    };
    modality.apply(s)
}

/// Continuous and thresholded signals for every taxel of a grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSignals {
    pub raw: Vec<RawSignal>,
    pub ternary: Vec<TernarySignal>,
}

/// Full pipeline for one scene: transform the object, query penetrations,
/// evaluate the signal model and threshold.
pub fn grid_signals(
    grid: &TaxelGrid,
    model: &ObjectModel,
    state: &ObjectState,
    cfg: &SensorConfig,
) -> Result<GridSignals> {
    let mut points = Vec::with_capacity(model.point_count());
    grid_signals_with_buffer(grid, model, state, cfg, &mut points)
}

/// As [`grid_signals`], reusing `points` as scratch space for the
/// world-frame cloud.
pub fn grid_signals_with_buffer(
    grid: &TaxelGrid,
    model: &ObjectModel,
    state: &ObjectState,
    cfg: &SensorConfig,
    points: &mut Vec<Vec3>,
) -> Result<GridSignals> {
    state.validate()?;
    geometry::transform_points_into(model, state, points)?;
    let density = model.density();
    let (v, w) = match cfg.frame {
        SignalFrame::Global => (state.linear_velocity, state.angular_velocity),
        SignalFrame::Palm => {
            let inv = grid.palm_pose().rotation.inverse();
            (inv * state.linear_velocity, inv * state.angular_velocity)
        }
    };
    let raw: Vec<RawSignal> = match cfg.model {
        SensorModel::Tactile => penetration_for_grid(grid, points, false)
            .iter()
            .map(|pen| raw_signal(pen.sum, density, &v, &w))
            .collect::<Result<_>>()?,
        SensorModel::CollisionGeometry => {
            let taxels: Vec<_> = grid.world_taxels().into_iter().map(|t| t.collision_only()).collect();
            let pens = penetration_for_grid(grid, points, true);
            let to_frame = match cfg.frame {
                SignalFrame::Global => nalgebra::UnitQuaternion::identity(),
                SignalFrame::Palm => grid.palm_pose().rotation.inverse(),
            };
            taxels
                .iter()
                .zip(&pens)
                .map(|(t, pen)| {
                    let normal = raw_signal(pen.sum, density, &Vec3::zeros(), &Vec3::zeros())?;
                    let mut push = Vec3::zeros();
                    for (&i, &p) in pen.indices.iter().zip(&pen.penetrations) {
                        let d = t.origin() - points[i as usize];
                        let l = d.norm();
                        if l > 0.0 {
                            push += d * (p / l);
                        }
                    }
                    let push = to_frame * (push / density);
                    Ok(RawSignal {
                        sx: push.x,
                        sy: push.y,
                        sz: normal.sz,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let ternary = raw
        .iter()
        .map(|r| threshold(r, &cfg.thresholds, cfg.modality))
        .collect();
    Ok(GridSignals { raw, ternary })
}

/// One row of a signal trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalRow {
    pub t: f64,
    pub taxel_id: usize,
    #[serde(rename = "Sx_raw")]
    pub sx_raw: f64,
    #[serde(rename = "Sy_raw")]
    pub sy_raw: f64,
    #[serde(rename = "Sz_raw")]
    pub sz_raw: f64,
    pub sx: i8,
    pub sy: i8,
    pub sz: i8,
}

impl SignalRow {
    pub fn new(t: f64, taxel_id: usize, raw: &RawSignal, tern: &TernarySignal) -> Self {
        Self {
            t,
            taxel_id,
            sx_raw: raw.sx,
            sy_raw: raw.sy,
            sz_raw: raw.sz,
            sx: tern.sx,
            sy: tern.sy,
            sz: tern.sz,
        }
    }
}

/// Writes rows as `t,taxel_id,Sx_raw,Sy_raw,Sz_raw,sx,sy,sz` CSV.
pub fn write_signal_csv<W: Write>(rows: impl IntoIterator<Item = SignalRow>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_signal_csv<R: std::io::Read>(r: R) -> Result<Vec<SignalRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{transform_points, TaxelSpec, CANONICAL_PALM_EXTENT};
    use crate::scene::fixtures;
    use nalgebra::{Isometry3, UnitQuaternion};
    use proptest::prelude::*;

    #[test]
    fn no_contact_gives_zero() {
        let r = raw_signal(0.0, 1000.0, &Vec3::new(1.0, 2.0, 3.0), &Vec3::new(4.0, 5.0, 6.0)).unwrap();
        assert_eq!(r, RawSignal::default());
    }

    #[test]
    fn static_contact_has_no_shear() {
        let r = raw_signal(0.5, 1000.0, &Vec3::zeros(), &Vec3::zeros()).unwrap();
        assert_eq!(r, RawSignal { sx: 0.0, sy: 0.0, sz: 0.5 / 1000.0 });
    }

    #[test]
    fn hand_evaluated_signal() {
        let r = raw_signal(0.16, 1000.0, &Vec3::new(0.02, 0.0, 0.0), &Vec3::new(0.01, 0.0, 0.0)).unwrap();
        assert!((r.sx - 4.8e-6).abs() < 1e-18);
        assert_eq!(r.sy, 0.0);
        assert!((r.sz - 1.6e-4).abs() < 1e-18);
    }

    #[test]
    fn bad_density() {
        let e = raw_signal(0.1, 0.0, &Vec3::zeros(), &Vec3::zeros()).unwrap_err();
        assert!(matches!(e, Error::InvalidModel(_)));
        assert!(raw_signal(0.1, -1.0, &Vec3::zeros(), &Vec3::zeros()).is_err());
    }

    #[test]
    fn threshold_examples() {
        let raw = RawSignal { sx: -5e-6, sy: 0.0, sz: 2e-4 };
        let cfg = ThresholdConfig::new(1e-6, 1e-5).unwrap();
        assert_eq!(threshold(&raw, &cfg, Modality::Signed3Axis), TernarySignal::new(-1, 0, 1));
        assert_eq!(threshold(&raw, &cfg, Modality::Unsigned3Axis), TernarySignal::new(1, 0, 1));
        assert_eq!(threshold(&raw, &cfg, Modality::NormalOnly), TernarySignal::new(0, 0, 1));
        assert_eq!(threshold(&raw, &cfg, Modality::ProprioOnly), TernarySignal::ZERO);
        assert_eq!(threshold(&raw, &cfg, Modality::SignedShearOnly), TernarySignal::new(-1, 0, 0));
        // equality with the threshold does not fire
        let edge = RawSignal { sx: 1e-6, sy: -1e-6, sz: 1e-5 };
        assert_eq!(threshold(&edge, &cfg, Modality::Signed3Axis), TernarySignal::ZERO);
    }

    #[test]
    fn threshold_config_validation() {
        assert!(ThresholdConfig::new(0.0, 1.0).is_err());
        assert!(ThresholdConfig::new(1.0, f64::NAN).is_err());
        assert!(serde_json::from_str::<ThresholdConfig>(r#"{"shear":-1,"normal":1}"#).is_err());
    }

    fn all_ternary() -> Vec<TernarySignal> {
        let mut v = Vec::new();
        for sx in -1..=1 {
            for sy in -1..=1 {
                for sz in 0..=1 {
                    v.push(TernarySignal::new(sx, sy, sz));
                }
            }
        }
        v
    }

    #[test]
    fn masks_idempotent_and_commute_with_abs() {
        for s in all_ternary() {
            for m in Modality::ALL {
                assert_eq!(m.apply(m.apply(s)), m.apply(s));
                let abs = Modality::Unsigned3Axis;
                assert_eq!(m.apply(abs.apply(s)), abs.apply(m.apply(s)));
            }
        }
    }

    proptest! {
        #[test]
        fn output_sets_respect_modality(
            sx in -1e-3f64..1e-3, sy in -1e-3f64..1e-3, sz in 0.0f64..1e-3,
            shear in 1e-7f64..1e-4, normal in 1e-7f64..1e-4, mi in 0usize..5,
        ) {
            let m = Modality::ALL[mi];
            let t = threshold(&RawSignal { sx, sy, sz }, &ThresholdConfig::new(shear, normal).unwrap(), m);
            prop_assert!((0..=1).contains(&t.sz));
            match m {
                Modality::Signed3Axis => prop_assert!((-1..=1).contains(&t.sx) && (-1..=1).contains(&t.sy)),
                Modality::Unsigned3Axis => prop_assert!((0..=1).contains(&t.sx) && (0..=1).contains(&t.sy)),
                Modality::SignedShearOnly => prop_assert_eq!(t.sz, 0),
                Modality::NormalOnly => prop_assert!(t.sx == 0 && t.sy == 0),
                Modality::ProprioOnly => prop_assert_eq!(t, TernarySignal::ZERO),
            }
        }
    }

    fn resting_cylinder() -> (TaxelGrid, ObjectModel, ObjectState) {
        let model = fixtures::make_cylinder(0.0325, 0.222, 4096, 11).unwrap();
        let state = fixtures::lying_on_palm(0.0325);
        (TaxelGrid::canonical(), model, state)
    }

    #[test]
    fn hovering_object_gives_all_zero() {
        let (grid, model, mut state) = resting_cylinder();
        state.position.z += 0.2;
        state.linear_velocity = Vec3::new(0.05, 0.0, 0.0);
        let out = grid_signals(&grid, &model, &state, &SensorConfig::default()).unwrap();
        assert_eq!(out.raw.len(), 16);
        assert!(out.raw.iter().all(|r| *r == RawSignal::default()));
        assert!(out.ternary.iter().all(|t| *t == TernarySignal::ZERO));
    }

    #[test]
    fn sliding_matches_per_taxel_oracle_and_mirrors() {
        let (grid, model, state) = resting_cylinder();
        let cfg = SensorConfig::default();
        let forward = state.with_twist(Vec3::new(0.03, 0.0, 0.0), Vec3::zeros());
        let out = grid_signals(&grid, &model, &forward, &cfg).unwrap();
        // per-taxel oracle straight from the definitions
        let pts = transform_points(&model, &forward).unwrap();
        let mut contacted = 0;
        for (k, t) in grid.world_taxels().iter().enumerate() {
            let sum: f64 = pts
                .iter()
                .map(|p| (p - t.origin()).norm())
                .filter(|l| *l <= t.sensing_range())
                .map(|l| t.sensing_range() - l)
                .sum();
            let sz = sum / model.density();
            assert!((out.raw[k].sz - sz).abs() <= 1e-12 * sz.max(1e-30));
            assert!((out.raw[k].sx - sz * 0.03).abs() <= 1e-12 * sz.max(1e-30));
            if out.raw[k].sx.abs() > cfg.thresholds.shear() {
                assert_eq!(out.ternary[k].sx, 1);
                contacted += 1;
            }
        }
        assert!(contacted > 0);
        let backward = state.with_twist(Vec3::new(-0.03, 0.0, 0.0), Vec3::zeros());
        let back = grid_signals(&grid, &model, &backward, &cfg).unwrap();
        for (a, b) in out.ternary.iter().zip(&back.ternary) {
            assert_eq!(a.sx, -b.sx);
            assert_eq!(a.sz, b.sz);
        }
    }

    #[test]
    fn zero_twist_zero_shear_and_normal_iff_contact() {
        let (grid, model, state) = resting_cylinder();
        let out = grid_signals(&grid, &model, &state, &SensorConfig::default()).unwrap();
        let pts = transform_points(&model, &state).unwrap();
        for (k, t) in grid.world_taxels().iter().enumerate() {
            assert_eq!(out.raw[k].sx, 0.0);
            assert_eq!(out.raw[k].sy, 0.0);
            let inside = pts.iter().any(|p| (p - t.origin()).norm() < t.sensing_range());
            assert_eq!(out.raw[k].sz > 0.0, inside);
        }
    }

    #[test]
    fn palm_frame_option_on_tilted_palm() {
        let (grid, model, state) = resting_cylinder();
        let rot = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let pose = Isometry3::from_parts(Vec3::zeros().into(), rot);
        let grid = grid.with_palm_pose(pose);
        // rotate the object with the palm so contacts are identical
        let moved = ObjectState {
            position: rot * state.position,
            orientation: (rot * UnitQuaternion::new_unchecked(state.orientation)).into_inner(),
            linear_velocity: rot * Vec3::new(0.02, 0.0, 0.0),
            angular_velocity: Vec3::zeros(),
        };
        let cfg = SensorConfig { frame: SignalFrame::Palm, ..Default::default() };
        let palm = grid_signals(&grid, &model, &moved, &cfg).unwrap();
        let cfg = SensorConfig::default();
        let global = grid_signals(&grid, &model, &moved, &cfg).unwrap();
        for (p, g) in palm.raw.iter().zip(&global.raw) {
            // in the palm frame the slide is along +x; globally along +y
            assert!((p.sx - g.sy).abs() <= 1e-15);
            assert!(p.sy.abs() <= 1e-15 * p.sz.max(1e-30) + 1e-30);
        }
    }

    #[test]
    fn baseline_uses_collision_radius() {
        let t = TaxelSpec::new(Vec3::zeros(), 0.01, 0.03).unwrap();
        let grid = TaxelGrid::new(vec![t], CANONICAL_PALM_EXTENT, Isometry3::identity()).unwrap();
        // one point between r and R, one inside r
        let model = ObjectModel::new(vec![Vec3::new(0.02, 0.0, 0.0), Vec3::new(0.005, 0.0, 0.0)], 1.0, 1.0, Vec3::zeros()).unwrap();
        let state = ObjectState::default().with_twist(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros());
        let cfg = SensorConfig { model: SensorModel::CollisionGeometry, ..Default::default() };
        let out = grid_signals(&grid, &model, &state, &cfg).unwrap();
        let density = 2.0;
        assert!((out.raw[0].sz - 0.005 / density).abs() < 1e-15);
        // pushed toward -x by the inner point, independent of velocity
        assert!((out.raw[0].sx + 0.005 / density).abs() < 1e-15);
        let tactile = grid_signals(&grid, &model, &state, &SensorConfig::default()).unwrap();
        assert!((tactile.raw[0].sz - (0.01 + 0.025) / density).abs() < 1e-15);
    }

    #[test]
    fn csv_schema() {
        let rows = vec![SignalRow::new(0.1, 3, &RawSignal { sx: 1e-9, sy: 0.0, sz: 2e-9 }, &TernarySignal::new(1, 0, 1))];
        let mut buf = Vec::new();
        write_signal_csv(rows.clone(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,taxel_id,Sx_raw,Sy_raw,Sz_raw,sx,sy,sz");
        assert_eq!(read_signal_csv(buf.as_slice()).unwrap(), rows);
    }
}
