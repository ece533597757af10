//! Object point clouds, taxel layout and rigid transforms.
//!
//! Everything here is SI: meters, seconds, kilograms. Taxel origins live in
//! the palm frame; [`TaxelGrid::world_taxels`] moves them into the world
//! frame where object points are expressed.

mod io;
mod penetration;

pub use io::{load_grid, load_object, read_object, save_grid, write_object};
pub(crate) use penetration::penetration_for_grid;
pub use penetration::{
    penetrations, penetrations_batched, penetrations_naive, penetrations_with, PenetrationResult,
    PointIndex, Strategy,
};

use nalgebra::{Isometry3, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on the quaternion norm accepted by [`ObjectState::rotation`].
pub const QUATERNION_NORM_TOL: f64 = 1e-9;

/// Collision radius of a single taxel cylinder (1.5 cm).
pub const CANONICAL_COLLISION_RADIUS: f64 = 0.015;
/// Default sensing range. Must exceed the collision radius.
pub const CANONICAL_SENSING_RANGE: f64 = 0.025;
/// Palm skin extent, width (palm y) by length (palm x): 37 mm x 96 mm.
pub const CANONICAL_PALM_EXTENT: PalmExtent = PalmExtent {
    width: 0.037,
    length: 0.096,
};

/// One taxel: magnetometer origin plus its collision and sensing radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaxelSpecRepr", into = "TaxelSpecRepr")]
pub struct TaxelSpec {
    origin: Vec3,
    collision_radius: f64,
    sensing_range: f64,
}

#[derive(Serialize, Deserialize)]
struct TaxelSpecRepr {
    origin: [f64; 3],
    collision_radius: f64,
    sensing_range: f64,
}

impl TryFrom<TaxelSpecRepr> for TaxelSpec {
    type Error = Error;

    fn try_from(r: TaxelSpecRepr) -> Result<Self> {
        TaxelSpec::new(Vec3::from(r.origin), r.collision_radius, r.sensing_range)
    }
}

impl From<TaxelSpec> for TaxelSpecRepr {
    fn from(t: TaxelSpec) -> Self {
        TaxelSpecRepr {
            origin: t.origin.into(),
            collision_radius: t.collision_radius,
            sensing_range: t.sensing_range,
        }
    }
}

impl TaxelSpec {
    pub fn new(origin: Vec3, collision_radius: f64, sensing_range: f64) -> Result<Self> {
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidGeometry("taxel origin is not finite".into()));
        }
        if !(sensing_range > 0.0) || !sensing_range.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "sensing range must be positive, got {sensing_range}"
            )));
        }
        if !(collision_radius >= 0.0) || collision_radius > sensing_range {
            return Err(Error::InvalidGeometry(format!(
                "collision radius {collision_radius} must lie in [0, sensing range {sensing_range}]"
            )));
        }
        Ok(Self {
            origin,
            collision_radius,
            sensing_range,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn collision_radius(&self) -> f64 {
        self.collision_radius
    }

    pub fn sensing_range(&self) -> f64 {
        self.sensing_range
    }

    /// Same taxel with the origin replaced.
    pub fn with_origin(mut self, origin: Vec3) -> Self {
        self.origin = origin;
        self
    }

    /// Copy whose sensing sphere is the collision sphere. Used by the
    /// collision-geometry baseline sensor.
    pub fn collision_only(mut self) -> Self {
        self.sensing_range = self.collision_radius.max(f64::MIN_POSITIVE);
        self
    }
}

/// Rectangular extent of the sensing skin in the palm frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalmExtent {
    /// Along palm y (m).
    pub width: f64,
    /// Along palm x (m).
    pub length: f64,
}

impl PalmExtent {
    pub fn contains(&self, p: &Vec3) -> bool {
        p.x.abs() <= 0.5 * self.length && p.y.abs() <= 0.5 * self.width
    }
}

/// Ordered taxel set mounted on a palm.
///
/// The palm frame has x along the skin length, y along its width and z out of
/// the skin surface; the skin surface is the plane z = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaxelGridRepr", into = "TaxelGridRepr")]
pub struct TaxelGrid {
    taxels: Vec<TaxelSpec>,
    palm_extent: PalmExtent,
    palm_pose: Isometry3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TaxelGridRepr {
    taxels: Vec<TaxelSpec>,
    palm_extent: PalmExtent,
    #[serde(default)]
    palm_position: [f64; 3],
    /// `[w, x, y, z]`
    #[serde(default = "identity_wxyz")]
    palm_orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TryFrom<TaxelGridRepr> for TaxelGrid {
    type Error = Error;

    fn try_from(r: TaxelGridRepr) -> Result<Self> {
        let [w, x, y, z] = r.palm_orientation;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::InvalidGeometry(
                "palm orientation is not a unit quaternion".into(),
            ));
        }
        let pose = Isometry3::from_parts(
            Vec3::from(r.palm_position).into(),
            UnitQuaternion::new_unchecked(q),
        );
        TaxelGrid::new(r.taxels, r.palm_extent, pose)
    }
}

impl From<TaxelGrid> for TaxelGridRepr {
    fn from(g: TaxelGrid) -> Self {
        let q = g.palm_pose.rotation.quaternion();
        TaxelGridRepr {
            taxels: g.taxels,
            palm_extent: g.palm_extent,
            palm_position: g.palm_pose.translation.vector.into(),
            palm_orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl TaxelGrid {
    pub fn new(taxels: Vec<TaxelSpec>, palm_extent: PalmExtent, palm_pose: Isometry3<f64>) -> Result<Self> {
        if !(palm_extent.width > 0.0 && palm_extent.length > 0.0) {
            return Err(Error::InvalidGeometry("palm extent must be positive".into()));
        }
        if let Some((i, _)) = taxels
            .iter()
            .enumerate()
            .find(|(_, t)| !palm_extent.contains(&t.origin))
        {
            return Err(Error::InvalidGeometry(format!(
                "taxel {i} origin lies outside the palm extent"
            )));
        }
        Ok(Self {
            taxels,
            palm_extent,
            palm_pose,
        })
    }

    /// Regular `cols` x `rows` layout, rows ordered along +x, columns along
    /// +y. Taxel `id = row * cols + col`. Origins sit `depth` below the skin
    /// surface.
    pub fn regular(
        cols: usize,
        rows: usize,
        extent: PalmExtent,
        collision_radius: f64,
        sensing_range: f64,
        depth: f64,
    ) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidGeometry("layout needs at least one row and column".into()));
        }
        let mut taxels = Vec::with_capacity(cols * rows);
        for row in 0..rows {
            let x = -0.5 * extent.length + (row as f64 + 0.5) * extent.length / rows as f64;
            for col in 0..cols {
                let y = -0.5 * extent.width + (col as f64 + 0.5) * extent.width / cols as f64;
                taxels.push(TaxelSpec::new(Vec3::new(x, y, -depth), collision_radius, sensing_range)?);
            }
        }
        Self::new(taxels, extent, Isometry3::identity())
    }

    /// 16 taxels in 2 columns x 8 rows over the 37 mm x 96 mm skin.
    ///
    /// The magnetometer layout is not published; this is an assumed default.
    /// Each origin sits one collision radius below the surface so that the
    /// collision sphere just touches the skin plane while the sensing sphere
    /// reaches `R - r` above it.
    pub fn canonical() -> Self {
        Self::regular(
            2,
            8,
            CANONICAL_PALM_EXTENT,
            CANONICAL_COLLISION_RADIUS,
            CANONICAL_SENSING_RANGE,
            CANONICAL_COLLISION_RADIUS,
        )
        .expect("canonical layout is valid")
    }

    pub fn taxels(&self) -> &[TaxelSpec] {
        &self.taxels
    }

    pub fn len(&self) -> usize {
        self.taxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taxels.is_empty()
    }

    pub fn palm_extent(&self) -> PalmExtent {
        self.palm_extent
    }

    pub fn palm_pose(&self) -> &Isometry3<f64> {
        &self.palm_pose
    }

    pub fn with_palm_pose(mut self, pose: Isometry3<f64>) -> Self {
        self.palm_pose = pose;
        self
    }

    /// Taxels with origins expressed in the world frame.
    pub fn world_taxels(&self) -> Vec<TaxelSpec> {
        self.taxels
            .iter()
            .map(|t| {
                let o = self.palm_pose.transform_point(&Point3::from(t.origin));
                t.with_origin(o.coords)
            })
            .collect()
    }

    /// Largest sensing range in the grid.
    pub fn max_sensing_range(&self) -> f64 {
        self.taxels.iter().map(|t| t.sensing_range).fold(0.0, f64::max)
    }
}

/// Rigid object sampled as a surface point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    points: Vec<Vec3>,
    volume: f64,
    mass: f64,
    com: Vec3,
    bounding_radius: f64,
    ends: [Vec3; 2],
    sampling_seed: Option<u64>,
}

impl ObjectModel {
    /// Builds a model from object-frame surface points.
    ///
    /// The two "ends" used by the rotation penalty default to the centers of
    /// the bounding-box faces along the longest box axis.
    pub fn new(points: Vec<Vec3>, volume: f64, mass: f64, com: Vec3) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidModel("object needs at least one point".into()));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidModel(format!("volume must be positive, got {volume}")));
        }
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(Error::InvalidModel(format!("mass must be non-negative, got {mass}")));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) || !com.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coordinate".into()));
        }
        let bounding_radius = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let ends = aabb_ends(&points);
        Ok(Self {
            points,
            volume,
            mass,
            com,
            bounding_radius,
            ends,
            sampling_seed: None,
        })
    }

    pub fn with_ends(mut self, ends: [Vec3; 2]) -> Self {
        self.ends = ends;
        self
    }

    pub fn with_sampling_seed(mut self, seed: u64) -> Self {
        self.sampling_seed = Some(seed);
        self
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn com(&self) -> Vec3 {
        self.com
    }

    /// Point density D: point count over object volume (points / m^3).
    pub fn density(&self) -> f64 {
        self.points.len() as f64 / self.volume
    }

    /// Radius of the origin-centered sphere enclosing every point.
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Object-frame endpoints along the object's long axis.
    pub fn ends(&self) -> [Vec3; 2] {
        self.ends
    }

    /// Seed used to sample the surface, when the model came from a fixture.
    pub fn sampling_seed(&self) -> Option<u64> {
        self.sampling_seed
    }
}

fn aabb_ends(points: &[Vec3]) -> [Vec3; 2] {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    let axis = extent.imax();
    let center = 0.5 * (lo + hi);
    let (mut a, mut b) = (center, center);
    a[axis] = lo[axis];
    b[axis] = hi[axis];
    [a, b]
}

/// Object pose and twist in the world frame.
///
/// The orientation is stored as a raw quaternion; it is checked for unit norm
/// whenever it is used to rotate points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub position: Vec3,
    pub orientation: Quaternion<f64>,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
}

impl Default for ObjectState {
    fn default() -> Self {
        Self::at_rest(Vec3::zeros(), UnitQuaternion::identity())
    }
}

impl ObjectState {
    pub fn at_rest(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: orientation.into_inner(),
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn with_twist(mut self, linear: Vec3, angular: Vec3) -> Self {
        self.linear_velocity = linear;
        self.angular_velocity = angular;
        self
    }

    /// The orientation as a rotation, or an error if its norm is off by more
    /// than [`QUATERNION_NORM_TOL`].
    pub fn rotation(&self) -> Result<UnitQuaternion<f64>> {
        let n = self.orientation.norm();
        if !n.is_finite() || (n - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "orientation quaternion has norm {n}"
            )));
        }
        Ok(UnitQuaternion::new_unchecked(self.orientation))
    }

    pub fn validate(&self) -> Result<()> {
        self.rotation()?;
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite(&self.position) || !finite(&self.linear_velocity) || !finite(&self.angular_velocity) {
            return Err(Error::InvalidState("non-finite pose or twist".into()));
        }
        Ok(())
    }

    /// World-frame image of an object-frame point.
    pub fn to_world(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.rotation()? * p + self.position)
    }
}

/// Object surface points in the world frame: `rotate(orientation, p) + position`.
pub fn transform_points(model: &ObjectModel, state: &ObjectState) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(model.point_count());
    transform_points_into(model, state, &mut out)?;
    Ok(out)
}

/// As [`transform_points`], reusing `out`'s allocation.
pub fn transform_points_into(model: &ObjectModel, state: &ObjectState, out: &mut Vec<Vec3>) -> Result<()> {
    let rot = state.rotation()?.to_rotation_matrix();
    let m = rot.matrix();
    out.clear();
    out.extend(model.points.iter().map(|p| m * p + state.position));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect()
    }

    // Homogeneous 4x4 built from the rotation-matrix entries of a quaternion,
    // written out longhand so it does not share code with the implementation.
    fn homogeneous(q: &Quaternion<f64>, t: &Vec3) -> Matrix4<f64> {
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        Matrix4::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), t.x,
            2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x), t.y,
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y), t.z,
            0.0, 0.0, 0.0, 1.0,
        )
    }

    #[test]
    fn identity_pose_keeps_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 32);
        let model = ObjectModel::new(pts.clone(), 1e-3, 0.1, Vec3::zeros()).unwrap();
        let out = transform_points(&model, &ObjectState::default()).unwrap();
        assert_eq!(out, pts);
    }

    #[test]
    fn half_turn_about_z() {
        let model = ObjectModel::new(vec![Vec3::new(1.0, 0.0, 0.0)], 1.0, 1.0, Vec3::zeros()).unwrap();
        let state = ObjectState::at_rest(Vec3::zeros(), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), PI));
        let out = transform_points(&model, &state).unwrap();
        assert!((out[0] - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn random_pose_matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pts = cloud(&mut rng, 64);
            let model = ObjectModel::new(pts.clone(), 1e-3, 0.1, Vec3::zeros()).unwrap();
            let axis = nalgebra::Unit::new_normalize(Vec3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1));
            let rot = UnitQuaternion::from_axis_angle(&axis, rng.random_range(-PI..PI));
            let pos = Vec3::new(rng.random(), rng.random(), rng.random());
            let state = ObjectState::at_rest(pos, rot);
            let out = transform_points(&model, &state).unwrap();
            let h = homogeneous(&state.orientation, &pos);
            for (p, o) in pts.iter().zip(&out) {
                let e = h * Vector4::new(p.x, p.y, p.z, 1.0);
                assert!((Vec3::new(e.x, e.y, e.z) - o).norm() < 1e-9);
            }
            // pairwise lengths preserved
            for i in 0..8 {
                let j = (i * 7 + 3) % 64;
                assert!(((pts[i] - pts[j]).norm() - (out[i] - out[j]).norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let model = ObjectModel::new(vec![Vec3::zeros()], 1.0, 1.0, Vec3::zeros()).unwrap();
        let mut state = ObjectState::default();
        state.orientation = Quaternion::new(1.0, 0.01, 0.0, 0.0);
        let err = transform_points(&model, &state).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
        // within tolerance is accepted
        state.orientation = Quaternion::new(1.0 + 5e-10, 0.0, 0.0, 0.0);
        assert!(transform_points(&model, &state).is_ok());
    }

    #[test]
    fn canonical_grid_layout() {
        let g = TaxelGrid::canonical();
        assert_eq!(g.len(), 16);
        for t in g.taxels() {
            assert!(g.palm_extent().contains(&t.origin()));
            assert!(t.sensing_range() >= t.collision_radius());
        }
        // rows advance along +x
        let xs: Vec<f64> = g.taxels().iter().step_by(2).map(|t| t.origin().x).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn taxel_validation() {
        assert!(TaxelSpec::new(Vec3::zeros(), 0.01, 0.0).is_err());
        assert!(TaxelSpec::new(Vec3::zeros(), 0.04, 0.03).is_err());
        assert!(TaxelSpec::new(Vec3::zeros(), 0.03, 0.03).is_ok());
        let far = TaxelSpec::new(Vec3::new(1.0, 0.0, 0.0), 0.01, 0.02).unwrap();
        assert!(TaxelGrid::new(vec![far], CANONICAL_PALM_EXTENT, Isometry3::identity()).is_err());
    }

    #[test]
    fn model_density_is_count_over_volume() {
        let model = ObjectModel::new(vec![Vec3::zeros(); 512], 7.369e-4, 0.1, Vec3::zeros()).unwrap();
        let d = model.density();
        assert_eq!(d, 512.0 / 7.369e-4);
        assert!((d * model.volume() - 512.0).abs() <= 512.0 * f64::EPSILON);
        assert!(ObjectModel::new(vec![], 1.0, 1.0, Vec3::zeros()).is_err());
        assert!(ObjectModel::new(vec![Vec3::zeros()], 0.0, 1.0, Vec3::zeros()).is_err());
    }
}
