//! Artifact writers. Floats are printed in shortest round-trip form, so equal
//! inputs give byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::Outcome;

pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Outcome<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::Failure::Numerical(format!("json: {e}")))?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}
