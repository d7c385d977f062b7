//! Matrix file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `MBEM`                  |
//! | 4      | 2    | version, u16 = 1              |
//! | 6      | 1    | dtype, 0 = f32, 1 = f64       |
//! | 7      | 1    | reserved, 0                   |
//! | 8      | 8    | rows, u64                     |
//! | 16     | 8    | cols, u64                     |
//! | 24     | ...  | row-major payload             |
//!
//! CSV is comma-separated with no header and `.` as decimal point.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use super::matrix::TimeSeriesMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MBEM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// `.csv` selects CSV; everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode_binary(m: ArrayView2<'_, f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(0);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in m.iter() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::MalformedHeader("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let dtype = match bytes[6] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(Error::MalformedHeader(format!("unknown dtype {other}"))),
    };
    if bytes[7] != 0 {
        return Err(Error::MalformedHeader("reserved byte is not zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::MalformedHeader(format!("{rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = count.checked_mul(dtype.width());
    if expected != Some(payload.len()) {
        return Err(Error::DimensionMismatch(format!(
            "header declares {rows}x{cols} {:?} but payload has {} bytes",
            dtype,
            payload.len()
        )));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))
}

pub fn encode_csv(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line: i + 1,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            values.push(v);
        }
        let n = values.len() - before;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::DimensionMismatch(format!(
                    "line {} has {n} fields, expected {c}",
                    i + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::EmptyMatrix)?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// Read a matrix file as a single-run time series with the default TR.
pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<TimeSeriesMatrix> {
    let data = match format {
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes)?
        }
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            decode_csv(&text)?
        }
    };
    TimeSeriesMatrix::single_run(data)
}

/// Write the matrix payload; segmentation metadata lives in the manifest.
pub fn write_matrix(m: &TimeSeriesMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    write_array(m.view(), path, format)
}

pub fn write_array(m: ArrayView2<'_, f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Binary => encode_binary(m, Dtype::F64),
        MatrixFormat::Csv => encode_csv(m).into_bytes(),
    };
    write_bytes(path, &bytes)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
