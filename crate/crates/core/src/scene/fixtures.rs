//! Object fixtures sampled as surface point clouds.
//!
//! Points are spread over the surface with area-proportional allocation per
//! face and jittered-grid stratification inside each face, so local point
//! counts track surface area closely even for small clouds. Volumes are
//! closed-form and the density is `count / volume`.

use std::f64::consts::PI;

use nalgebra::UnitQuaternion;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{ObjectModel, ObjectState, Vec3};
use crate::{Error, Result};

/// Mass per unit volume used when a fixture is given no mass (kg/m^3).
/// Matches the 108 g, 6.5 cm x 22.2 cm test cylinder.
pub const DEFAULT_MASS_DENSITY: f64 = 146.6;

/// Diameter 6.5 cm, length 22.2 cm.
pub const CANONICAL_CYLINDER_RADIUS: f64 = 0.0325;
pub const CANONICAL_CYLINDER_LENGTH: f64 = 0.222;

const MIN_POINTS: usize = 8;

fn check_dims(dims: &[f64], point_count: usize) -> Result<()> {
    if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidModel(format!("degenerate fixture dimensions {dims:?}")));
    }
    if point_count < MIN_POINTS {
        return Err(Error::InvalidModel(format!(
            "fixtures need at least {MIN_POINTS} points, got {point_count}"
        )));
    }
    Ok(())
}

/// Splits `total` over weights by largest remainder.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// `n` jittered samples of the unit square. `aspect` is the u:v side ratio
/// of the face being parameterized.
fn jittered(n: usize, aspect: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let nu = ((n as f64 * aspect).sqrt().round() as usize).clamp(1, n);
    let nv = n.div_ceil(nu);
    let mut cells: Vec<usize> = (0..nu * nv).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells.sort_unstable();
    cells
        .into_iter()
        .map(|c| {
            let (i, j) = (c % nu, c / nu);
            let u = (i as f64 + rng.random::<f64>()) / nu as f64;
            let v = (j as f64 + rng.random::<f64>()) / nv as f64;
            (u, v)
        })
        .collect()
}

/// Axis-aligned rectangle face: `origin + u * du + v * dv`.
struct Face {
    origin: Vec3,
    du: Vec3,
    dv: Vec3,
}

impl Face {
    fn area(&self) -> f64 {
        self.du.cross(&self.dv).norm()
    }
}

fn box_faces(center: Vec3, size: Vec3) -> Vec<Face> {
    let h = 0.5 * size;
    let lo = center - h;
    let (ex, ey, ez) = (Vec3::new(size.x, 0.0, 0.0), Vec3::new(0.0, size.y, 0.0), Vec3::new(0.0, 0.0, size.z));
    vec![
        Face { origin: lo, du: ey, dv: ez },
        Face { origin: lo + ex, du: ey, dv: ez },
        Face { origin: lo, du: ex, dv: ez },
        Face { origin: lo + ey, du: ex, dv: ez },
        Face { origin: lo, du: ex, dv: ey },
        Face { origin: lo + ez, du: ex, dv: ey },
    ]
}

fn sample_faces(faces: &[Face], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let areas: Vec<f64> = faces.iter().map(Face::area).collect();
    let counts = allocate(count, &areas);
    let mut out = Vec::with_capacity(count);
    for (face, n) in faces.iter().zip(counts) {
        let aspect = face.du.norm() / face.dv.norm();
        out.extend(
            jittered(n, aspect, rng)
                .into_iter()
                .map(|(u, v)| face.origin + u * face.du + v * face.dv),
        );
    }
    out
}

/// Solid cylinder with its axis along object z, centered at the origin.
pub fn make_cylinder(radius: f64, length: f64, point_count: usize, seed: u64) -> Result<ObjectModel> {
    check_dims(&[radius, length], point_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 2.0 * PI * radius * length;
    let cap = PI * radius * radius;
    let counts = allocate(point_count, &[side, cap, cap]);
    let mut points = Vec::with_capacity(point_count);
    for (u, v) in jittered(counts[0], 2.0 * PI * radius / length, &mut rng) {
        let theta = 2.0 * PI * u;
        points.push(Vec3::new(radius * theta.cos(), radius * theta.sin(), (v - 0.5) * length));
    }
    for (cap_idx, z) in [(1, 0.5 * length), (2, -0.5 * length)] {
        // sqrt on the radial coordinate keeps the disk sampling area-uniform
        for (u, v) in jittered(counts[cap_idx], 1.0, &mut rng) {
            let rho = radius * u.sqrt();
            let theta = 2.0 * PI * v;
            points.push(Vec3::new(rho * theta.cos(), rho * theta.sin(), z));
        }
    }
    let volume = PI * radius * radius * length;
    let ends = [Vec3::new(0.0, 0.0, -0.5 * length), Vec3::new(0.0, 0.0, 0.5 * length)];
    Ok(ObjectModel::new(points, volume, volume * DEFAULT_MASS_DENSITY, Vec3::zeros())?
        .with_ends(ends)
        .with_sampling_seed(seed))
}

/// The 6.5 cm x 22.2 cm in-domain cylinder.
pub fn make_canonical_cylinder(point_count: usize, seed: u64) -> Result<ObjectModel> {
    Ok(make_cylinder(CANONICAL_CYLINDER_RADIUS, CANONICAL_CYLINDER_LENGTH, point_count, seed)?.with_mass(0.108))
}

/// Solid box with full edge lengths `size`, centered at the origin.
pub fn make_box(size: Vec3, point_count: usize, seed: u64) -> Result<ObjectModel> {
    check_dims(size.as_slice(), point_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sample_faces(&box_faces(Vec3::zeros(), size), point_count, &mut rng);
    let volume = size.x * size.y * size.z;
    let axis = size.imax();
    let mut a = Vec3::zeros();
    a[axis] = 0.5 * size[axis];
    Ok(ObjectModel::new(points, volume, volume * DEFAULT_MASS_DENSITY, Vec3::zeros())?
        .with_ends([-a, a])
        .with_sampling_seed(seed))
}

/// One box of a composite object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPart {
    pub center: Vec3,
    pub size: Vec3,
    /// Mass per unit volume of this part (kg/m^3).
    pub mass_density: f64,
}

impl BoxPart {
    fn contains_strictly(&self, p: &Vec3, tol: f64) -> bool {
        let d = p - self.center;
        (0..3).all(|k| d[k].abs() < 0.5 * self.size[k] - tol)
    }

    fn overlap_volume(&self, other: &BoxPart) -> f64 {
        (0..3)
            .map(|k| {
                let lo = (self.center[k] - 0.5 * self.size[k]).max(other.center[k] - 0.5 * other.size[k]);
                let hi = (self.center[k] + 0.5 * self.size[k]).min(other.center[k] + 0.5 * other.size[k]);
                (hi - lo).max(0.0)
            })
            .product()
    }
}

/// Union of non-overlapping boxes (touching faces allowed). Surface points
/// buried inside or on the contact face of another part are dropped and
/// resampled.
pub fn make_composite(parts: &[BoxPart], point_count: usize, seed: u64) -> Result<ObjectModel> {
    if parts.is_empty() {
        return Err(Error::InvalidModel("composite needs at least one part".into()));
    }
    for p in parts {
        check_dims(p.size.as_slice(), point_count)?;
    }
    for (i, a) in parts.iter().enumerate() {
        for b in &parts[i + 1..] {
            if a.overlap_volume(b) > 0.0 {
                return Err(Error::InvalidModel("composite parts overlap".into()));
            }
        }
    }
    let (owners, faces): (Vec<usize>, Vec<Face>) = parts
        .iter()
        .enumerate()
        .flat_map(|(i, p)| box_faces(p.center, p.size).into_iter().map(move |f| (i, f)))
        .unzip();
    let scale = parts.iter().map(|p| p.size.max()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let buried = |owner: usize, p: &Vec3| {
        parts.iter().enumerate().any(|(j, other)| {
            j != owner && {
                let d = p - other.center;
                (0..3).all(|k| d[k].abs() <= 0.5 * other.size[k] + tol)
            }
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(point_count);
    let areas: Vec<f64> = faces.iter().map(Face::area).collect();
    let mut batch = point_count;
    for _ in 0..64 {
        let counts = allocate(batch, &areas);
        for ((face, owner), n) in faces.iter().zip(&owners).zip(counts) {
            let aspect = face.du.norm() / face.dv.norm();
            for (u, v) in jittered(n, aspect, &mut rng) {
                let p = face.origin + u * face.du + v * face.dv;
                if !buried(*owner, &p) {
                    points.push(p);
                }
            }
        }
        if points.len() >= point_count {
            break;
        }
        batch = (point_count - points.len()).max(MIN_POINTS);
    }
    if points.len() < point_count {
        return Err(Error::InvalidModel("composite surface is almost entirely buried".into()));
    }
    points.shuffle(&mut rng);
    points.truncate(point_count);
    debug_assert!(points.iter().all(|p| !parts.iter().any(|b| b.contains_strictly(p, tol))));

    let volume: f64 = parts.iter().map(|p| p.size.product()).sum();
    let mass: f64 = parts.iter().map(|p| p.size.product() * p.mass_density).sum();
    let com = parts
        .iter()
        .map(|p| p.center * (p.size.product() * p.mass_density))
        .fold(Vec3::zeros(), |a, b| a + b)
        / mass;
    Ok(ObjectModel::new(points, volume, mass, com)?.with_sampling_seed(seed))
}

/// Hammer-like composite: 37 cm long handle-plus-head, 20 cm wide head,
/// 6.4 cm thick, 284 g, with the center of mass pulled toward the head.
pub fn make_hammer(point_count: usize, seed: u64) -> Result<ObjectModel> {
    let length = 0.37;
    let head = Vec3::new(0.064, 0.20, 0.064);
    let handle = Vec3::new(length - head.x, 0.04, 0.032);
    let handle_center = Vec3::new(-0.5 * length + 0.5 * handle.x, 0.0, 0.0);
    let head_center = Vec3::new(0.5 * length - 0.5 * head.x, 0.0, 0.0);
    // wooden handle, metal-ish head; rescaled below to the 284 g total
    let parts = [
        BoxPart { center: handle_center, size: handle, mass_density: 600.0 },
        BoxPart { center: head_center, size: head, mass_density: 600.0 * 4.0 },
    ];
    let model = make_composite(&parts, point_count, seed)?;
    let ends = [Vec3::new(-0.5 * length, 0.0, 0.0), Vec3::new(0.5 * length, 0.0, 0.0)];
    Ok(model.with_mass(0.284).with_ends(ends))
}

/// Pose that lays a z-axis cylinder of `radius` along world y, resting on the
/// skin plane z = 0 above the palm center.
pub fn lying_on_palm(radius: f64) -> ObjectState {
    let rot = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), -0.5 * PI);
    ObjectState::at_rest(Vec3::new(0.0, 0.0, radius), rot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_cylinder_volume() {
        let m = make_canonical_cylinder(512, 1).unwrap();
        let v = PI * 0.0325f64.powi(2) * 0.222;
        assert!((m.volume() - v).abs() <= f64::EPSILON * v);
        // pi r^2 l = 7.3666e-4, quoted to three figures as 7.37e-4
        assert!((m.volume() - 7.369e-4).abs() / 7.369e-4 < 1e-3);
        assert_eq!(m.point_count(), 512);
    }

    #[test]
    fn density_times_volume_is_count() {
        for m in [
            make_canonical_cylinder(777, 2).unwrap(),
            make_box(Vec3::new(0.1, 0.2, 0.05), 1000, 3).unwrap(),
            make_hammer(2048, 4).unwrap(),
        ] {
            let n = m.point_count() as f64;
            assert!((m.density() * m.volume() - n).abs() <= n * f64::EPSILON);
        }
    }

    #[test]
    fn points_lie_on_cylinder_surface() {
        let m = make_cylinder(0.03, 0.2, 2000, 9).unwrap();
        for p in m.points() {
            let rho = (p.x * p.x + p.y * p.y).sqrt();
            let on_side = (rho - 0.03).abs() < 1e-12 && p.z.abs() <= 0.1 + 1e-12;
            let on_cap = (p.z.abs() - 0.1).abs() < 1e-12 && rho <= 0.03 + 1e-12;
            assert!(on_side || on_cap);
        }
    }

    #[test]
    fn unit_cube_faces_are_balanced() {
        let m = make_box(Vec3::new(1.0, 1.0, 1.0), 6000, 5).unwrap();
        let mut per_face = [0usize; 6];
        for p in m.points() {
            let k = p.iamax();
            let face = 2 * k + usize::from(p[k] > 0.0);
            per_face[face] += 1;
        }
        // binomial sd for p = 1/6, n = 6000 is ~29; allow 3 sd
        for c in per_face {
            assert!((c as i64 - 1000).abs() <= 87, "{per_face:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = make_canonical_cylinder(300, 77).unwrap();
        let b = make_canonical_cylinder(300, 77).unwrap();
        let c = make_canonical_cylinder(300, 78).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), c.points());
        assert_eq!(a.sampling_seed(), Some(77));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(make_cylinder(0.0, 0.1, 100, 0).is_err());
        assert!(make_cylinder(0.1, 0.1, 7, 0).is_err());
        assert!(make_box(Vec3::new(1.0, -1.0, 1.0), 100, 0).is_err());
        let p = BoxPart { center: Vec3::zeros(), size: Vec3::repeat(1.0), mass_density: 1.0 };
        let q = BoxPart { center: Vec3::new(0.5, 0.0, 0.0), ..p };
        assert!(make_composite(&[p, q], 100, 0).is_err());
    }

    #[test]
    fn hammer_com_is_skewed_toward_head() {
        let m = make_hammer(3000, 6).unwrap();
        assert_eq!(m.point_count(), 3000);
        assert!(m.com().x > 0.05);
        assert_eq!(m.mass(), 0.284);
        // no surface sample is buried in the other part
        let bb = m.points().iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        assert!((bb.x - 0.185).abs() < 1e-9 && (bb.y - 0.1).abs() < 1e-9);
    }
}
