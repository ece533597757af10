//! Gait analysis: phase portraits of joint trajectories, Poincaré-section
//! crossings and their dispersion, plus a few periodicity helpers for
//! ternary signal traces.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::scene::EpisodeTrace;
use crate::sensor::TernarySignal;
use crate::{Error, Result};

/// Central differences with spacing `dt`; one-sided at both ends.
pub fn central_difference(xs: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 samples to differentiate, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("sample spacing must be positive, got {dt}")));
    }
    Ok((0..n)
        .map(|k| match k {
            0 => (xs[1] - xs[0]) / dt,
            k if k == n - 1 => (xs[n - 1] - xs[n - 2]) / dt,
            k => (xs[k + 1] - xs[k - 1]) / (2.0 * dt),
        })
        .collect())
}

/// `(q, qdot)` samples of one joint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePortrait {
    pub joint: usize,
    pub points: Vec<[f64; 2]>,
}

impl PhasePortrait {
    /// Portrait of a position series sampled every `dt` seconds.
    pub fn from_series(joint: usize, q: &[f64], dt: f64) -> Result<Self> {
        if q.len() < 3 {
            return Err(Error::InvalidConfig(format!("phase portrait needs at least 3 samples, got {}", q.len())));
        }
        let qd = central_difference(q, dt)?;
        Ok(Self {
            joint,
            points: q.iter().zip(qd).map(|(a, b)| [*a, b]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn phase_portrait(trace: &EpisodeTrace, joint: usize) -> Result<PhasePortrait> {
    PhasePortrait::from_series(joint, &trace.joint_series(joint)?, trace.dt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    /// From the negative side of the normal to the non-negative side.
    Positive,
    Negative,
    Both,
}

/// A line in the `(q, qdot)` plane through `anchor` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoincareSection {
    pub anchor: [f64; 2],
    pub normal: [f64; 2],
    pub direction: CrossingDirection,
}

impl PoincareSection {
    /// The normal is normalized; it must be nonzero.
    pub fn new(anchor: [f64; 2], normal: [f64; 2], direction: CrossingDirection) -> Result<Self> {
        let len = normal[0].hypot(normal[1]);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidConfig("section normal must be nonzero".into()));
        }
        Ok(Self {
            anchor,
            normal: [normal[0] / len, normal[1] / len],
            direction,
        })
    }

    /// Vertical line at the median joint position, positive crossings only.
    pub fn auto(portrait: &PhasePortrait) -> Result<Self> {
        let mut q: Vec<f64> = portrait.points.iter().map(|p| p[0]).collect();
        if q.is_empty() {
            return Err(Error::InvalidConfig("empty portrait".into()));
        }
        q.sort_by(f64::total_cmp);
        let n = q.len();
        let median = if n % 2 == 1 { q[n / 2] } else { 0.5 * (q[n / 2 - 1] + q[n / 2]) };
        Self::new([median, 0.0], [1.0, 0.0], CrossingDirection::Positive)
    }

    /// Signed distance from the line.
    pub fn side(&self, p: &[f64; 2]) -> f64 {
        self.normal[0] * (p[0] - self.anchor[0]) + self.normal[1] * (p[1] - self.anchor[1])
    }

    /// Position along the line, measured along `(-n_qdot, n_q)`.
    pub fn coordinate(&self, p: &[f64; 2]) -> f64 {
        -self.normal[1] * (p[0] - self.anchor[0]) + self.normal[0] * (p[1] - self.anchor[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    /// Index of the sample just before the crossing.
    pub index: usize,
    pub point: [f64; 2],
    pub coordinate: f64,
    /// +1 into the non-negative side, -1 out of it.
    pub direction: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub crossings: Vec<Crossing>,
    /// Population standard deviation of the crossing coordinates; `None`
    /// without crossings.
    pub dispersion: Option<f64>,
}

/// Locates section crossings by linear interpolation between consecutive
/// portrait points on opposite sides of the line.
pub fn poincare_crossings(portrait: &PhasePortrait, section: &PoincareSection) -> CrossingReport {
    let mut crossings = Vec::new();
    for (k, w) in portrait.points.windows(2).enumerate() {
        let (sa, sb) = (section.side(&w[0]), section.side(&w[1]));
        let (a_pos, b_pos) = (sa >= 0.0, sb >= 0.0);
        if a_pos == b_pos {
            continue;
        }
        let direction: i8 = if b_pos { 1 } else { -1 };
        let wanted = match section.direction {
            CrossingDirection::Positive => direction == 1,
            CrossingDirection::Negative => direction == -1,
            CrossingDirection::Both => true,
        };
        if !wanted {
            continue;
        }
        let lambda = sa / (sa - sb);
        let point = [
            (1.0 - lambda) * w[0][0] + lambda * w[1][0],
            (1.0 - lambda) * w[0][1] + lambda * w[1][1],
        ];
        crossings.push(Crossing {
            index: k,
            point,
            coordinate: section.coordinate(&point),
            direction,
        });
    }
    let coords: Vec<f64> = crossings.iter().map(|c| c.coordinate).collect();
    CrossingReport {
        dispersion: population_std(&coords),
        crossings,
    }
}

pub fn population_std(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn write_crossings_csv<W: Write>(crossings: &[Crossing], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["index", "q", "qdot", "coordinate", "direction"])?;
    for c in crossings {
        wtr.write_record([
            c.index.to_string(),
            c.point[0].to_string(),
            c.point[1].to_string(),
            c.coordinate.to_string(),
            c.direction.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Normalized autocorrelation for lags `0..=max_lag`. Zero-variance input
/// gives `None`.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let var: f64 = d.iter().map(|x| x * x).sum();
    if !(var > 0.0) {
        return None;
    }
    Some(
        (0..=max_lag.min(n - 1))
            .map(|lag| d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / var)
            .collect(),
    )
}

/// Averages the autocorrelations of every non-constant series.
pub fn mean_autocorrelation(series: &[Vec<f64>], max_lag: usize) -> Option<Vec<f64>> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0;
    for s in series {
        if let Some(r) = autocorrelation(s, max_lag) {
            if acc.is_empty() {
                acc = vec![0.0; r.len()];
            }
            for (a, v) in acc.iter_mut().zip(&r) {
                *a += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    Some(acc.into_iter().map(|a| a / count as f64).collect())
}

/// Lag of the highest autocorrelation after the first dip below zero.
pub fn dominant_period(acf: &[f64]) -> Option<usize> {
    let start = acf.iter().position(|&r| r < 0.0)?;
    (start..acf.len()).max_by(|&a, &b| acf[a].total_cmp(&acf[b]).then(b.cmp(&a)))
}

/// Fraction of `(tick, taxel)` entries with a nonzero shear output.
pub fn shear_duty_cycle(frames: &[Vec<TernarySignal>]) -> f64 {
    let total: usize = frames.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let active = frames.iter().flatten().filter(|s| s.shear_active()).count();
    active as f64 / total as f64
}

/// Ternary frames of a trace, one per tick.
pub fn ternary_frames(trace: &EpisodeTrace) -> Vec<Vec<TernarySignal>> {
    trace
        .ticks
        .iter()
        .map(|t| t.taxels.iter().map(|r| r.ternary).collect())
        .collect()
}

/// Renders a portrait, the section line and its crossings as SVG.
pub fn portrait_svg(portrait: &PhasePortrait, section: &PoincareSection, crossings: &[Crossing]) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 24.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &portrait.points {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    for i in 0..2 {
        if !(hi[i] > lo[i]) {
            lo[i] -= 1.0;
            hi[i] += 1.0;
        }
    }
    let sx = |q: f64| PAD + (q - lo[0]) / (hi[0] - lo[0]) * (SIZE - 2.0 * PAD);
    let sy = |v: f64| SIZE - PAD - (v - lo[1]) / (hi[1] - lo[1]) * (SIZE - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let pts: Vec<String> = portrait
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1" points="{}"/>"#,
        pts.join(" ")
    );
    // section line clipped to the plot box by walking far along the tangent
    let t = [-section.normal[1], section.normal[0]];
    let span = (hi[0] - lo[0]).hypot(hi[1] - lo[1]) * 2.0;
    let a = [section.anchor[0] - span * t[0], section.anchor[1] - span * t[1]];
    let b = [section.anchor[0] + span * t[0], section.anchor[1] + span * t[1]];
    let _ = writeln!(svg, r#"<clipPath id="box"><rect x="{PAD}" y="{PAD}" width="{w}" height="{w}"/></clipPath>"#, w = SIZE - 2.0 * PAD);
    let _ = writeln!(
        svg,
        r#"<line clip-path="url(#box)" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        sx(a[0]),
        sy(a[1]),
        sx(b[0]),
        sy(b[1])
    );
    for c in crossings {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="crimson"/>"#,
            sx(c.point[0]),
            sy(c.point[1])
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="16" font-family="sans-serif" font-size="12">joint {}</text>"#,
        portrait.joint
    );
    svg.push_str("</svg>\n");
    svg
}
