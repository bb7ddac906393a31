//! Field container I/O.
//!
//! Binary container layout ("FLD1"): 4 magic bytes, format version as u16
//! little-endian, nx/ny/nt as u32, dt as f64, then the field values as
//! little-endian f32 in (x, y, t) order with t fastest. Values are stored
//! single-precision: a field whose values are f32-representable round-trips
//! bit-exactly, anything else is quantized once on save.
//!
//! CSV snapshots hold one time slice: one row per x, comma-separated y
//! columns, optional non-numeric header row. Cells are parsed as f32 so a
//! CSV written by this module matches the binary container path exactly.

use super::{DataError, FieldSeries};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FLD1";
const VERSION: u16 = 1;

/// Writes the container format.
pub fn save_field(path: &Path, f: &FieldSeries) -> Result<(), DataError> {
    let mut buf = Vec::with_capacity(22 + 4 * f.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(f.ny as u32).to_le_bytes());
    buf.extend_from_slice(&(f.nt as u32).to_le_bytes());
    buf.extend_from_slice(&f.dt.to_le_bytes());
    for v in &f.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Reads the container format.
pub fn load_field(path: &Path) -> Result<FieldSeries, DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < 22 {
        return Err(DataError::BadFormat("header truncated".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DataError::BadFormat(format!("unsupported container version {version}")));
    }
    let read_u32 = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let nx = read_u32(6) as usize;
    let ny = read_u32(10) as usize;
    let nt = read_u32(14) as usize;
    let dt = f64::from_le_bytes(bytes[18..26.min(bytes.len())].try_into().map_err(|_| {
        DataError::BadFormat("header truncated".into())
    })?);
    let expected = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nt))
        .ok_or_else(|| DataError::BadFormat("dimension overflow".into()))?;
    let payload = &bytes[26..];
    if payload.len() != expected * 4 {
        return Err(DataError::BadFormat(format!(
            "payload holds {} bytes, dimensions require {}",
            payload.len(),
            expected * 4
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FieldSeries::new(nx, ny, nt, dt, values)
}

/// Writes one snapshot as CSV: one row per x, columns over y. Values pass
/// through f32 so they agree with the binary container exactly.
pub fn save_snapshot_csv(path: &Path, f: &FieldSeries, t: usize) -> Result<(), DataError> {
    if t >= f.nt {
        return Err(DataError::BadSpec(format!("snapshot {t} out of range (nt = {})", f.nt)));
    }
    let mut out = String::new();
    for x in 0..f.nx {
        for y in 0..f.ny {
            if y > 0 {
                out.push(',');
            }
            out.push_str(&(f.get(x, y, t) as f32).to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads one CSV snapshot. Returns (nx, ny, values in x-major order). A
/// first row containing any non-numeric cell is treated as a header and
/// skipped.
pub fn load_snapshot_csv(path: &Path) -> Result<(usize, usize, Vec<f64>), DataError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f32>, _> =
            line.split(',').map(|cell| cell.trim().parse::<f32>()).collect();
        match parsed {
            Ok(cells) => rows.push(cells.into_iter().map(|v| v as f64).collect()),
            Err(_) if lineno == 0 => continue,
            Err(e) => {
                return Err(DataError::BadFormat(format!("line {}: {e}", lineno + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(DataError::BadFormat("no data rows".into()));
    }
    let ny = rows[0].len();
    if rows.iter().any(|r| r.len() != ny) {
        return Err(DataError::BadFormat("ragged rows".into()));
    }
    let nx = rows.len();
    Ok((nx, ny, rows.into_iter().flatten().collect()))
}

/// Stacks per-snapshot CSV files (in argument order) into a series.
pub fn load_field_csv(paths: &[&Path], dt: f64) -> Result<FieldSeries, DataError> {
    if paths.is_empty() {
        return Err(DataError::BadSpec("no snapshot files given".into()));
    }
    let mut nx = 0;
    let mut ny = 0;
    let mut slices = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let (rx, ry, vals) = load_snapshot_csv(p)?;
        if i == 0 {
            nx = rx;
            ny = ry;
        } else if (rx, ry) != (nx, ny) {
            return Err(DataError::BadFormat(format!(
                "snapshot {i} is {rx}x{ry}, expected {nx}x{ny}"
            )));
        }
        slices.push(vals);
    }
    let nt = slices.len();
    let mut values = vec![0.0; nx * ny * nt];
    for (t, slice) in slices.iter().enumerate() {
        for p in 0..nx * ny {
            values[p * nt + t] = slice[p];
        }
    }
    FieldSeries::new(nx, ny, nt, dt, values)
}
