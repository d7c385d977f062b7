use std::fs;
use std::path::Path;

use neuroencode::data::{read_matrix, write_matrix, MatrixFormat, TimeSeriesMatrix};
use neuroencode::ErrorClass;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        class: ErrorClass::Data,
        message: format!("i/o error on {}: {e}", path.display()),
    }
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError {
        class: ErrorClass::Data,
        message: format!("cannot parse {}: {e}", path.display()),
    })
}

/// Format follows the extension (`.csv` or binary).
pub fn write_ts(path: &Path, m: &TimeSeriesMatrix) -> CliResult<()> {
    ensure_parent(path)?;
    Ok(write_matrix(m, path, MatrixFormat::from_path(path))?)
}

pub fn read_ts(path: &Path) -> CliResult<TimeSeriesMatrix> {
    Ok(read_matrix(path, MatrixFormat::from_path(path))?)
}
