//! Point-cloud object files and grid files.
//!
//! Object files are plain text:
//!
//! ```text
//! volume 7.369e-4 mass 0.108 com 0 0 0
//! 0.0325 0 0.05
//! ...
//! ```
//!
//! one `x y z` triple per line in meters after the header. Blank lines and
//! lines starting with `#` are ignored. Grid files are JSON.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{ObjectModel, TaxelGrid, Vec3};
use crate::{Error, Result};

pub fn read_object<R: Read>(reader: R) -> Result<ObjectModel> {
    let mut header: Option<(f64, f64, Vec3)> = None;
    let mut points = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(parse_header(text).map_err(|msg| Error::Parse { line: line_no, msg })?);
            continue;
        }
        let nums = parse_floats(text).map_err(|msg| Error::Parse { line: line_no, msg })?;
        if nums.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `x y z`, found {} values", nums.len()),
            });
        }
        points.push(Vec3::new(nums[0], nums[1], nums[2]));
    }
    let (volume, mass, com) = header.ok_or(Error::Parse {
        line: 0,
        msg: "missing `volume .. mass .. com ..` header".into(),
    })?;
    ObjectModel::new(points, volume, mass, com)
}

fn parse_floats(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}")))
        .collect()
}

fn parse_header(text: &str) -> std::result::Result<(f64, f64, Vec3), String> {
    let tok: Vec<&str> = text.split_whitespace().collect();
    let num = |i: usize| -> std::result::Result<f64, String> {
        tok.get(i)
            .ok_or_else(|| "truncated header".to_string())?
            .parse::<f64>()
            .map_err(|e| format!("bad header value: {e}"))
    };
    if tok.len() != 8 || tok[0] != "volume" || tok[2] != "mass" || tok[4] != "com" {
        return Err("header must read `volume <m3> mass <kg> com <x y z>`".into());
    }
    Ok((num(1)?, num(3)?, Vec3::new(num(5)?, num(6)?, num(7)?)))
}

pub fn write_object<W: Write>(model: &ObjectModel, mut w: W) -> Result<()> {
    let c = model.com();
    writeln!(w, "volume {} mass {} com {} {} {}", model.volume(), model.mass(), c.x, c.y, c.z)?;
    for p in model.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn load_object(path: impl AsRef<Path>) -> Result<ObjectModel> {
    read_object(fs::File::open(path)?)
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<TaxelGrid> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

pub fn save_grid(grid: &TaxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(f, grid)?;
    Ok(())
}
