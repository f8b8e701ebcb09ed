//! Matrix containers: MFSM (magic, version, dimensions, column-major f64
//! payload, everything little-endian) and headerless CSV with one row per
//! location.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::reduced::SnapshotMatrix;

const MAGIC: &[u8; 4] = b"MFSM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

/// On-disk matrix encodings understood by [`load_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Mfsm,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "mfsm" => Ok(MatrixFormat::Mfsm),
            other => Err(Error::invalid(format!(
                "unknown matrix format {other:?} (expected csv or mfsm)"
            ))),
        }
    }
}

impl MatrixFormat {
    /// Infers the format from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> MatrixFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mfsm") => MatrixFormat::Mfsm,
            _ => MatrixFormat::Csv,
        }
    }
}

/// Writes a matrix in the MFSM container. Non-finite entries are rejected
/// so every valid file loads back.
pub fn write_mfsm(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + m.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_mfsm(path: &Path) -> Result<DMatrix<f64>> {
    let buf = std::fs::read(path)?;
    let ctx = || path.display().to_string();
    if buf.len() < HEADER_LEN {
        return Err(Error::data(format!("{}: file shorter than the MFSM header", ctx())));
    }
    if &buf[0..4] != MAGIC {
        return Err(Error::data(format!("{}: bad magic (not an MFSM file)", ctx())));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::data(format!(
            "{}: unsupported MFSM version {version} (expected {VERSION})",
            ctx()
        )));
    }
    let rows = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(buf[16..24].try_into().unwrap());
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::data(format!("{}: dimensions overflow", ctx())))?;
    if buf.len() - HEADER_LEN != payload {
        return Err(Error::data(format!(
            "{}: payload is {} bytes, header promises {payload}",
            ctx(),
            buf.len() - HEADER_LEN
        )));
    }
    let values: Vec<f64> = buf[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data(format!("{}: payload contains non-finite values", ctx())));
    }
    Ok(DMatrix::from_column_slice(rows as usize, cols as usize, &values))
}

/// Parses headerless CSV: one row per location, comma-separated numeric
/// cells, no missing values.
pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string())
}

pub(crate) fn parse_csv(text: &str, label: &str) -> Result<DMatrix<f64>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: label.to_string(),
        line,
        msg,
    };
    let mut values: Vec<f64> = Vec::new();
    let mut width = 0;
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut row_len = 0;
        for cell in line.split(',') {
            let t = cell.trim();
            let v: f64 = t
                .parse()
                .map_err(|_| err(lineno, format!("cell {t:?} is not a number")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {t:?}")));
            }
            values.push(v);
            row_len += 1;
        }
        if height == 0 {
            width = row_len;
        } else if row_len != width {
            return Err(err(
                lineno,
                format!("row has {row_len} cells, expected {width}"),
            ));
        }
        height += 1;
    }
    if height == 0 {
        return Err(err(1, "empty file".to_string()));
    }
    Ok(DMatrix::from_row_slice(height, width, &values))
}

/// Writes headerless CSV with shortest round-trip number formatting, so a
/// read-back reproduces every value bit for bit.
pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix contains non-finite entries"));
    }
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&m[(r, c)].to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    match format {
        MatrixFormat::Csv => read_csv_matrix(path),
        MatrixFormat::Mfsm => read_mfsm(path),
    }
}

pub fn load_snapshots(path: &Path, format: MatrixFormat) -> Result<SnapshotMatrix> {
    SnapshotMatrix::new(load_matrix(path, format)?)
}
