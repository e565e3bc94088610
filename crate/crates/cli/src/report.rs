//! Output tables and the JSON run report.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            // Debug formatting is the shortest string that round-trips.
            Cell::Float(x) => format!("{x:?}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(x) => json!(x.to_string()),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as i64)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &'static [&'static str]) -> Self {
        Self {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    /// Writes the table as `<name>.csv` or `<name>.json` and returns the file path.
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{}.csv", self.name));
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
                w.write_record(self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|c| c.render()))?;
                }
                w.flush()?;
                Ok(path)
            }
            Format::Json => {
                let path = dir.join(format!("{}.json", self.name));
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| Value::Object(self.columns.iter().zip(row).map(|(k, c)| (k.to_string(), c.to_json())).collect::<Map<_, _>>()))
                    .collect();
                fs::write(&path, serde_json::to_string_pretty(&json!({ "columns": self.columns, "rows": rows }))? + "\n")?;
                Ok(path)
            }
        }
    }
}

/// A single pass/fail decision: `value <= threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

/// What a subcommand produced before it is written to disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub verdicts: Vec<Verdict>,
    pub results: Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub struct RunMeta<'a> {
    pub command: &'a str,
    pub config_path: &'a Path,
    pub config_source: &'a str,
    pub seed: u64,
    pub workers: Option<usize>,
    pub format: Format,
}

pub fn config_hash(source: &str) -> String {
    Sha256::digest(source.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes all tables and `report.json` into `dir`; returns the report path.
pub fn write_all(dir: &Path, meta: &RunMeta, outcome: &Outcome) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut artifacts = Vec::new();
    for t in &outcome.tables {
        let p = t.write(dir, meta.format).with_context(|| format!("writing table {}", t.name))?;
        artifacts.push(p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = json!({
        "command": meta.command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_path": meta.config_path.display().to_string(),
        "config_sha256": config_hash(meta.config_source),
        "seed": meta.seed,
        "workers": meta.workers,
        "timestamp_unix": timestamp,
        "passed": outcome.passed(),
        "verdicts": outcome.verdicts,
        "artifacts": artifacts,
        "results": outcome.results,
    });
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv_cells() {
        for x in [0.1, -2.5e-17, 1.0 / 3.0, 0.0, 1e300] {
            assert_eq!(Cell::Float(x).render().parse::<f64>().unwrap(), x);
        }
        assert_eq!(Cell::from(true).render(), "1");
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
