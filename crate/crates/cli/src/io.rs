//! Field binary format and the CSV writers.
//!
//! Binary fields carry a 16-byte header — magic `CHCF`, a little-endian u32
//! version, and a little-endian u64 value count — followed by the values as
//! little-endian f64. CSV columns are `index,x[,y],value` for fields; the
//! reader accepts either format (CSV takes the last column as the value).

use anyhow::{bail, Context, Result};
use chc_core::geometry::{BoundaryField, Geometry, InteriorField, Mode};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CHCF";
pub const VERSION: u32 = 1;

pub fn write_field_binary(path: &Path, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_field_binary(path: &Path) -> Result<Vec<f64>> {
    let buf = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if buf.len() < 16 || &buf[0..4] != MAGIC {
        bail!("{}: not a CHCF field file", path.display());
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        bail!("{}: unsupported CHCF version {version}", path.display());
    }
    let len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 8 * len {
        bail!(
            "{}: header claims {len} values but file holds {} bytes of data",
            path.display(),
            buf.len() - 16
        );
    }
    Ok(buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Read a field from CHCF binary or CSV (by sniffing the magic).
pub fn read_field_values(path: &Path) -> Result<Vec<f64>> {
    let buf = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if buf.len() >= 4 && &buf[0..4] == MAGIC {
        return read_field_binary(path);
    }
    let text = String::from_utf8(buf).context("CSV field file is not UTF-8")?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap().trim();
        if lineno == 0 && last.parse::<f64>().is_err() {
            continue; // header row
        }
        values.push(
            last.parse::<f64>()
                .with_context(|| format!("line {}: bad value '{last}'", lineno + 1))?,
        );
    }
    Ok(values)
}

pub fn write_interior_csv(path: &Path, geom: &Geometry, f: &InteriorField) -> Result<()> {
    let mut out = String::new();
    match geom.mode() {
        Mode::Interval1D => {
            out.push_str("index,x,value\n");
            for (k, v) in f.values().iter().enumerate() {
                let (x, _) = geom.node_position(k);
                out.push_str(&format!("{k},{x},{v}\n"));
            }
        }
        Mode::Strip2D => {
            out.push_str("index,x,y,value\n");
            for (k, v) in f.values().iter().enumerate() {
                let (x, y) = geom.node_position(k);
                out.push_str(&format!("{k},{x},{y},{v}\n"));
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_boundary_csv(path: &Path, geom: &Geometry, f: &BoundaryField) -> Result<()> {
    let mut out = String::new();
    match geom.mode() {
        Mode::Interval1D => {
            out.push_str("index,x,value\n");
            for (b, v) in f.values().iter().enumerate() {
                let (x, _) = geom.boundary_position(b);
                out.push_str(&format!("{b},{x},{v}\n"));
            }
        }
        Mode::Strip2D => {
            out.push_str("index,x,y,value\n");
            for (b, v) in f.values().iter().enumerate() {
                let (x, y) = geom.boundary_position(b);
                out.push_str(&format!("{b},{x},{y},{v}\n"));
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Generic CSV writer: a header plus rows of already-formatted cells.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}
