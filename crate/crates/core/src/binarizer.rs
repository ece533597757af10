//! Streaming binarization of recorded magnetometer signals.
//!
//! Each channel keeps two windows over its recent samples: a history buffer
//! and a current buffer that holds the newest samples. A sample enters the
//! current buffer, the sample it displaces moves to the history buffer, and
//! the output is the sign of `mean(current) - mean(history)` when that
//! difference exceeds the axis threshold. Outputs stay 0 until both buffers
//! have filled. The normal (z) axis reports onsets only, so its output is
//! clamped to `{0, 1}`.
//!
//! The sensor runs faster than the policy; [`resample`] bridges the rates by
//! holding the latest value at each output tick.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::sensor::{self, RawSignal, SignalRow, TernarySignal};
use crate::{Error, Result};

pub const DEFAULT_HISTORY_LEN: usize = 12;
pub const DEFAULT_CURRENT_LEN: usize = 4;
pub const DEFAULT_SAMPLE_RATE: f64 = 78.0;
pub const DEFAULT_OUTPUT_RATE: f64 = 20.0;
/// Placeholder thresholds in raw magnetometer units; tune per sensor.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [2.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    pub history_len: usize,
    pub current_len: usize,
    pub threshold: f64,
}

impl AxisConfig {
    pub fn new(history_len: usize, current_len: usize, threshold: f64) -> Result<Self> {
        let c = Self { history_len, current_len, threshold };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.current_len == 0 {
            return Err(Error::InvalidConfig("buffer lengths must be at least 1".into()));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidConfig(format!("threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }

    /// Number of samples before the first non-trivial output.
    pub fn warmup(&self) -> usize {
        self.history_len + self.current_len - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarizerConfig {
    /// x, y, z
    pub axes: [AxisConfig; 3],
    pub sample_rate: f64,
    pub output_rate: f64,
}

impl Default for BinarizerConfig {
    fn default() -> Self {
        let axis = |threshold| AxisConfig {
            history_len: DEFAULT_HISTORY_LEN,
            current_len: DEFAULT_CURRENT_LEN,
            threshold,
        };
        Self {
            axes: DEFAULT_THRESHOLDS.map(axis),
            sample_rate: DEFAULT_SAMPLE_RATE,
            output_rate: DEFAULT_OUTPUT_RATE,
        }
    }
}

impl BinarizerConfig {
    pub fn validate(&self) -> Result<()> {
        for a in &self.axes {
            a.validate()?;
        }
        if !(self.output_rate > 0.0) || !(self.sample_rate >= self.output_rate) || !self.sample_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "need sample_rate >= output_rate > 0 (got {} and {})",
                self.sample_rate, self.output_rate
            )));
        }
        Ok(())
    }
}

fn mean(buf: &VecDeque<f64>) -> f64 {
    buf.iter().fold(0.0, |acc, x| acc + x) / buf.len() as f64
}

/// Dual-buffer state of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    cfg: AxisConfig,
    clamp_positive: bool,
    history: VecDeque<f64>,
    current: VecDeque<f64>,
    last: i8,
    count: u64,
}

impl Channel {
    pub fn new(cfg: AxisConfig, clamp_positive: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            clamp_positive,
            history: VecDeque::with_capacity(cfg.history_len + 1),
            current: VecDeque::with_capacity(cfg.current_len + 1),
            last: 0,
            count: 0,
        })
    }

    /// Feeds one sample. A non-finite sample is dropped and the previous
    /// output repeated; the flag is `false` in that case.
    pub fn push(&mut self, x: f64) -> (i8, bool) {
        if !x.is_finite() {
            return (self.last, false);
        }
        self.count += 1;
        self.current.push_back(x);
        if self.current.len() > self.cfg.current_len {
            let moved = self.current.pop_front().unwrap_or_default();
            self.history.push_back(moved);
            if self.history.len() > self.cfg.history_len {
                self.history.pop_front();
            }
        }
        let mut out = 0;
        if self.history.len() == self.cfg.history_len && self.current.len() == self.cfg.current_len {
            let diff = mean(&self.current) - mean(&self.history);
            if diff.abs() > self.cfg.threshold {
                out = if diff > 0.0 { 1 } else { -1 };
            }
        }
        if self.clamp_positive {
            out = out.max(0);
        }
        self.last = out;
        (out, true)
    }

    /// Accepted samples so far.
    pub fn sample_count(&self) -> u64 {
        self.count
    }

    pub fn last_output(&self) -> i8 {
        self.last
    }
}

/// Outcome of one [`Binarizer::push`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PushOutput {
    pub signals: Vec<TernarySignal>,
    /// `(taxel, axis)` channels whose sample was rejected.
    pub rejected: Vec<(usize, usize)>,
}

/// Binarizer for a whole grid: three channels per taxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Binarizer {
    cfg: BinarizerConfig,
    channels: Vec<[Channel; 3]>,
}

impl Binarizer {
    pub fn new(cfg: BinarizerConfig, taxels: usize) -> Result<Self> {
        cfg.validate()?;
        let make = || -> Result<[Channel; 3]> {
            Ok([
                Channel::new(cfg.axes[0], false)?,
                Channel::new(cfg.axes[1], false)?,
                Channel::new(cfg.axes[2], true)?,
            ])
        };
        Ok(Self {
            cfg,
            channels: (0..taxels).map(|_| make()).collect::<Result<_>>()?,
        })
    }

    pub fn config(&self) -> &BinarizerConfig {
        &self.cfg
    }

    pub fn taxels(&self) -> usize {
        self.channels.len()
    }

    /// Feeds one `[bx, by, bz]` sample per taxel.
    pub fn push(&mut self, sample: &[[f64; 3]]) -> Result<PushOutput> {
        if sample.len() != self.channels.len() {
            return Err(Error::InvalidConfig(format!(
                "sample has {} taxels, binarizer has {}",
                sample.len(),
                self.channels.len()
            )));
        }
        let mut out = PushOutput {
            signals: Vec::with_capacity(sample.len()),
            rejected: Vec::new(),
        };
        for (taxel, (ch, b)) in self.channels.iter_mut().zip(sample).enumerate() {
            let mut s = [0i8; 3];
            for axis in 0..3 {
                let (v, ok) = ch[axis].push(b[axis]);
                s[axis] = v;
                if !ok {
                    out.rejected.push((taxel, axis));
                }
            }
            out.signals.push(TernarySignal::new(s[0], s[1], s[2]));
        }
        Ok(out)
    }

    /// Feeds one sample to a single taxel.
    pub fn push_taxel(&mut self, taxel: usize, b: [f64; 3]) -> Result<(TernarySignal, [bool; 3])> {
        let ch = self
            .channels
            .get_mut(taxel)
            .ok_or_else(|| Error::InvalidConfig(format!("taxel {taxel} out of range")))?;
        let (x, ax) = ch[0].push(b[0]);
        let (y, ay) = ch[1].push(b[1]);
        let (z, az) = ch[2].push(b[2]);
        Ok((TernarySignal::new(x, y, z), [ax, ay, az]))
    }
}

/// Latest-value hold onto ticks `k / rate`. `samples` must be sorted by
/// time; ticks run from the first multiple at or after the first sample to
/// the last multiple at or before the final sample.
pub fn resample<T: Copy>(samples: &[(f64, T)], rate: f64) -> Vec<(f64, T)> {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Vec::new();
    };
    let mut k = (first.0 * rate).ceil() as i64;
    while (k as f64) / rate < first.0 {
        k += 1;
    }
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let t = k as f64 / rate;
        if t > last.0 {
            break;
        }
        while j + 1 < samples.len() && samples[j + 1].0 <= t {
            j += 1;
        }
        out.push((t, samples[j].1));
        k += 1;
    }
    out
}

/// One row of a raw magnetometer log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub t: f64,
    pub taxel_id: usize,
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

pub fn read_raw_csv<R: Read>(r: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut rows = Vec::new();
    for (n, rec) in rdr.deserialize().enumerate() {
        let row: RawRow = rec.map_err(|e| Error::Parse {
            line: n + 2,
            msg: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Summary of a [`binarize_log`] run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BinarizeReport {
    pub input_rows: usize,
    pub output_rows: usize,
    pub taxels: usize,
    /// Channel samples rejected as non-finite.
    pub rejected: usize,
}

/// Binarizes a raw log and resamples every taxel to the output rate. Rows
/// come out ordered by tick, then taxel id; the raw columns carry the held
/// magnetometer reading.
pub fn binarize_log(rows: &[RawRow], cfg: &BinarizerConfig) -> Result<(Vec<SignalRow>, BinarizeReport)> {
    cfg.validate()?;
    let mut by_taxel: BTreeMap<usize, Vec<RawRow>> = BTreeMap::new();
    for r in rows {
        by_taxel.entry(r.taxel_id).or_default().push(*r);
    }
    let mut report = BinarizeReport {
        input_rows: rows.len(),
        taxels: by_taxel.len(),
        ..Default::default()
    };
    let mut streams = Vec::with_capacity(by_taxel.len());
    for (id, mut samples) in by_taxel {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut bin = Binarizer::new(*cfg, 1)?;
        let mut out = Vec::with_capacity(samples.len());
        for s in &samples {
            let (tern, ok) = bin.push_taxel(0, [s.bx, s.by, s.bz])?;
            report.rejected += ok.iter().filter(|a| !**a).count();
            let raw = RawSignal { sx: s.bx, sy: s.by, sz: s.bz };
            out.push((s.t, (raw, tern)));
        }
        streams.push((id, resample(&out, cfg.output_rate)));
    }
    let mut signal_rows: Vec<SignalRow> = streams
        .iter()
        .flat_map(|(id, s)| s.iter().map(move |(t, (raw, tern))| SignalRow::new(*t, *id, raw, tern)))
        .collect();
    signal_rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.taxel_id.cmp(&b.taxel_id)));
    report.output_rows = signal_rows.len();
    Ok((signal_rows, report))
}

/// Raw CSV in, signal CSV out.
pub fn binarize_csv<R: Read, W: Write>(input: R, output: W, cfg: &BinarizerConfig) -> Result<BinarizeReport> {
    let rows = read_raw_csv(input)?;
    let (signals, report) = binarize_log(&rows, cfg)?;
    sensor::write_signal_csv(signals, output)?;
    Ok(report)
}
