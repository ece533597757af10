//! Episode traces and their JSON Lines form.
//!
//! One JSON object per control tick:
//!
//! ```text
//! {"t":0.1,"pos":[x,y,z],"quat":[w,x,y,z],"v":[..],"w":[..],
//!  "q":[16],"tau":[16]|null,"a":[16]|null,"F":[4]|null,
//!  "taxels":[{"id":0,"Sx":..,"Sy":..,"Sz":..,"sx":0,"sy":0,"sz":1}, ...]}
//! ```
//!
//! A tick on which the object was dropped also carries `"dropped":true`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use crate::geometry::{ObjectState, Vec3};
use crate::sensor::{RawSignal, SignalRow, TernarySignal};
use crate::{Error, Result, NUM_FINGERS, NUM_JOINTS};

/// Control rate assumed for traces too short to infer one from.
pub const FALLBACK_CONTROL_RATE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaxelReading {
    pub id: usize,
    pub raw: RawSignal,
    pub ternary: TernarySignal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceTick {
    pub t: f64,
    pub state: ObjectState,
    /// Joint positions (rad).
    pub q: [f64; NUM_JOINTS],
    /// Joint torques (N m).
    pub tau: Option<[f64; NUM_JOINTS]>,
    /// Commanded joint targets (rad).
    pub action: Option<[f64; NUM_JOINTS]>,
    /// Fingertip forces (N).
    pub forces: Option<[f64; NUM_FINGERS]>,
    pub taxels: Vec<TaxelReading>,
    pub dropped: bool,
}

/// Timestamped rollout record at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub control_rate: f64,
    pub ticks: Vec<TraceTick>,
    /// The episode ended early because the object left the palm.
    pub dropped: bool,
}

impl EpisodeTrace {
    pub fn new(control_rate: f64) -> Self {
        Self {
            control_rate,
            ticks: Vec::new(),
            dropped: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn times(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.t).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.ticks.iter().map(|t| t.state.position).collect()
    }

    /// Series of one joint's position.
    pub fn joint_series(&self, joint: usize) -> Result<Vec<f64>> {
        if joint >= NUM_JOINTS {
            return Err(Error::InvalidConfig(format!("joint index {joint} out of range")));
        }
        Ok(self.ticks.iter().map(|t| t.q[joint]).collect())
    }

    /// Flattens the taxel readings into signal-CSV rows.
    pub fn signal_rows(&self) -> impl Iterator<Item = SignalRow> + '_ {
        self.ticks.iter().flat_map(|tick| {
            tick.taxels
                .iter()
                .map(move |r| SignalRow::new(tick.t, r.id, &r.raw, &r.ternary))
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for tick in &self.ticks {
            serde_json::to_writer(&mut w, &TickRecord::from(tick))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses a JSON Lines trace. The control rate is inferred from the
    /// first two timestamps.
    pub fn read_jsonl<R: Read>(r: R) -> Result<Self> {
        let mut ticks = Vec::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TickRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
            ticks.push(TraceTick::from(rec));
        }
        if ticks.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Parse {
                line: 0,
                msg: "timestamps must increase strictly".into(),
            });
        }
        let control_rate = match ticks.as_slice() {
            [a, b, ..] => 1.0 / (b.t - a.t),
            _ => FALLBACK_CONTROL_RATE,
        };
        let dropped = ticks.iter().any(|t| t.dropped);
        Ok(Self {
            control_rate,
            ticks,
            dropped,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(std::fs::File::open(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TaxelRecord {
    id: usize,
    #[serde(rename = "Sx")]
    raw_x: f64,
    #[serde(rename = "Sy")]
    raw_y: f64,
    #[serde(rename = "Sz")]
    raw_z: f64,
    sx: i8,
    sy: i8,
    sz: i8,
}

#[derive(Serialize, Deserialize)]
struct TickRecord {
    t: f64,
    pos: [f64; 3],
    quat: [f64; 4],
    v: [f64; 3],
    w: [f64; 3],
    q: [f64; NUM_JOINTS],
    #[serde(default)]
    tau: Option<[f64; NUM_JOINTS]>,
    #[serde(default)]
    a: Option<[f64; NUM_JOINTS]>,
    #[serde(default, rename = "F")]
    forces: Option<[f64; NUM_FINGERS]>,
    #[serde(default)]
    taxels: Vec<TaxelRecord>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    dropped: bool,
}

impl From<&TraceTick> for TickRecord {
    fn from(t: &TraceTick) -> Self {
        let q = &t.state.orientation;
        TickRecord {
            t: t.t,
            pos: t.state.position.into(),
            quat: [q.w, q.i, q.j, q.k],
            v: t.state.linear_velocity.into(),
            w: t.state.angular_velocity.into(),
            q: t.q,
            tau: t.tau,
            a: t.action,
            forces: t.forces,
            taxels: t
                .taxels
                .iter()
                .map(|r| TaxelRecord {
                    id: r.id,
                    raw_x: r.raw.sx,
                    raw_y: r.raw.sy,
                    raw_z: r.raw.sz,
                    sx: r.ternary.sx,
                    sy: r.ternary.sy,
                    sz: r.ternary.sz,
                })
                .collect(),
            dropped: t.dropped,
        }
    }
}

impl From<TickRecord> for TraceTick {
    fn from(r: TickRecord) -> Self {
        let [w, x, y, z] = r.quat;
        TraceTick {
            t: r.t,
            state: ObjectState {
                position: r.pos.into(),
                orientation: Quaternion::new(w, x, y, z),
                linear_velocity: r.v.into(),
                angular_velocity: r.w.into(),
            },
            q: r.q,
            tau: r.tau,
            action: r.a,
            forces: r.forces,
            taxels: r
                .taxels
                .into_iter()
                .map(|t| TaxelReading {
                    id: t.id,
                    raw: RawSignal {
                        sx: t.raw_x,
                        sy: t.raw_y,
                        sz: t.raw_z,
                    },
                    ternary: TernarySignal::new(t.sx, t.sy, t.sz),
                })
                .collect(),
            dropped: r.dropped,
        }
    }
}
