//! Per-taxel penetration queries.
//!
//! A point `i` at distance `l_i` from a taxel origin contributes
//! `P_i = R - l_i` when `l_i <= R`. Indices and penetrations are always
//! reported in ascending point-index order and summed in that order, so the
//! indexed path reproduces the naive loop bit for bit.

use super::{TaxelGrid, TaxelSpec, Vec3};

/// Points inside one taxel's sensing sphere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PenetrationResult {
    /// Ascending indices into the queried point list.
    pub indices: Vec<u32>,
    /// `R - l_i` for each listed index, in `[0, R]`.
    pub penetrations: Vec<f64>,
    /// Sum of `penetrations`, accumulated in index order.
    pub sum: f64,
}

impl PenetrationResult {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn push(&mut self, index: u32, p: f64) {
        self.indices.push(index);
        self.penetrations.push(p);
        self.sum += p;
    }
}

#[inline]
fn penetration_of(origin: &Vec3, range: f64, p: &Vec3) -> Option<f64> {
    let l = (p - origin).norm();
    (l <= range).then_some(range - l)
}

/// Penetrations of `points` into one taxel. The taxel origin must be in the
/// same frame as the points.
pub fn penetrations(taxel: &TaxelSpec, points: &[Vec3]) -> PenetrationResult {
    let origin = taxel.origin();
    let range = taxel.sensing_range();
    let mut out = PenetrationResult::default();
    for (i, p) in points.iter().enumerate() {
        if let Some(pen) = penetration_of(&origin, range, p) {
            out.push(i as u32, pen);
        }
    }
    out
}

/// How [`penetrations_with`] finds candidate points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every taxel against every point.
    Naive,
    /// Bounding-box cull, then a uniform cell index over the points.
    Indexed,
    /// Pick by problem size.
    Auto,
}

// Below this many taxel-point pairs building the index costs more than it saves.
const INDEX_MIN_PAIRS: usize = 16 * 1024;

/// Penetrations for every taxel of `grid` against world-frame `points`.
pub fn penetrations_batched(grid: &TaxelGrid, points: &[Vec3]) -> Vec<PenetrationResult> {
    penetrations_with(grid, points, Strategy::Auto)
}

/// Reference O(T*N) loop over world taxels.
pub fn penetrations_naive(grid: &TaxelGrid, points: &[Vec3]) -> Vec<PenetrationResult> {
    grid.world_taxels().iter().map(|t| penetrations(t, points)).collect()
}

pub fn penetrations_with(grid: &TaxelGrid, points: &[Vec3], strategy: Strategy) -> Vec<PenetrationResult> {
    let taxels = grid.world_taxels();
    penetrations_for_taxels(&taxels, points, strategy)
}

/// World-frame penetrations for every taxel of `grid`. With
/// `collision_only`, each taxel senses within its collision radius instead.
pub(crate) fn penetration_for_grid(grid: &TaxelGrid, points: &[Vec3], collision_only: bool) -> Vec<PenetrationResult> {
    let mut taxels = grid.world_taxels();
    if collision_only {
        taxels.iter_mut().for_each(|t| *t = t.collision_only());
    }
    penetrations_for_taxels(&taxels, points, Strategy::Auto)
}

pub(crate) fn penetrations_for_taxels(
    taxels: &[TaxelSpec],
    points: &[Vec3],
    strategy: Strategy,
) -> Vec<PenetrationResult> {
    if points.is_empty() {
        return vec![PenetrationResult::default(); taxels.len()];
    }
    let strategy = match strategy {
        Strategy::Auto if taxels.len() * points.len() >= INDEX_MIN_PAIRS => Strategy::Indexed,
        Strategy::Auto => Strategy::Naive,
        s => s,
    };
    match strategy {
        Strategy::Indexed => {
            let max_range = taxels.iter().map(|t| t.sensing_range()).fold(0.0, f64::max);
            let index = PointIndex::build(points, max_range);
            taxels.iter().map(|t| index.penetrations(t)).collect()
        }
        _ => taxels.iter().map(|t| penetrations(t, points)).collect(),
    }
}

type CellKey = (i32, i32, i32);

/// Uniform-cell index over a point set.
///
/// Points are bucketed by `floor(p / cell)` and stored sorted by cell key;
/// a query scans the 3x3 column of neighbouring cells with binary searches
/// on the sorted keys. The cell edge is at least the largest query radius.
#[derive(Debug, Clone)]
pub struct PointIndex<'a> {
    points: &'a [Vec3],
    inv_cell: f64,
    entries: Vec<(CellKey, u32)>,
    lo: Vec3,
    hi: Vec3,
}

impl<'a> PointIndex<'a> {
    pub fn build(points: &'a [Vec3], max_range: f64) -> Self {
        // A hair over R keeps floor() from skipping a cell when |dp| == R.
        let cell = (max_range * (1.0 + 1e-9)).max(1e-12);
        let inv_cell = 1.0 / cell;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut entries: Vec<(CellKey, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                lo = lo.inf(p);
                hi = hi.sup(p);
                (key_of(p, inv_cell), i as u32)
            })
            .collect();
        entries.sort_unstable();
        Self {
            points,
            inv_cell,
            entries,
            lo,
            hi,
        }
    }

    /// Distance from `p` to the bounding box of the indexed points.
    fn box_distance(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm()
    }

    pub fn penetrations(&self, taxel: &TaxelSpec) -> PenetrationResult {
        let origin = taxel.origin();
        let range = taxel.sensing_range();
        let mut out = PenetrationResult::default();
        if self.box_distance(&origin) > range * (1.0 + 1e-9) + 1e-12 {
            return out;
        }
        let (kx, ky, kz) = key_of(&origin, self.inv_cell);
        let mut candidates: Vec<u32> = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                let first = (kx + dx, ky + dy, kz - 1);
                let last = (kx + dx, ky + dy, kz + 1);
                let start = self.entries.partition_point(|(k, _)| *k < first);
                let end = self.entries.partition_point(|(k, _)| *k <= last);
                candidates.extend(self.entries[start..end].iter().map(|(_, i)| *i));
            }
        }
        candidates.sort_unstable();
        for i in candidates {
            if let Some(pen) = penetration_of(&origin, range, &self.points[i as usize]) {
                out.push(i, pen);
            }
        }
        out
    }
}

#[inline]
fn key_of(p: &Vec3, inv_cell: f64) -> CellKey {
    let k = |c: f64| (c * inv_cell).floor().clamp(i32::MIN as f64 + 2.0, i32::MAX as f64 - 2.0) as i32;
    (k(p.x), k(p.y), k(p.z))
}
