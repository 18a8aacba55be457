//! CSV, JSON and manifest writers. Every float is written with 17
//! significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use pslosses_core::io::format_f64;
use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{CliError, CliResult};

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::file(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::file(path, e))
}

pub fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::file(path, e))
}

/// A CSV cell.
pub enum Cell {
    Text(String),
    Float(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
        Cell::Float(v) => format_f64(*v),
        Cell::Int(v) => v.to_string(),
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<Cell>]) -> CliResult<()> {
    let mut w = create(path)?;
    let io = |e| CliError::file(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(render).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    finish(path, w)
}

/// A JSON number with 17 significant digits; null for non-finite values.
pub fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(Number::from_str(&format_f64(v)).expect("formatted float is a JSON number"))
    } else {
        Value::Null
    }
}

/// Rewrites every float in a serialized value with [`json_f64`].
pub fn with_full_precision(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => json_f64(n.as_f64().unwrap_or(f64::NAN)),
        Value::Array(items) => Value::Array(items.into_iter().map(with_full_precision).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, with_full_precision(v))).collect()),
        other => other,
    }
}

pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::file(path, e.into()))?;
    writeln!(w).map_err(|e| CliError::file(path, e))?;
    finish(path, w)
}

pub fn to_json<T: Serialize>(value: &T) -> Value {
    with_full_precision(serde_json::to_value(value).expect("serializable value"))
}

/// `<out>.manifest.json`, or `<out>/manifest.json` for directory outputs.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub library_version: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Value,
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
    pub started_unix_secs: f64,
    pub wall_clock_secs: f64,
}

/// Collects what a command did so `finish` can write its manifest.
pub struct RunRecorder {
    started: Instant,
    started_unix: f64,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
}

impl RunRecorder {
    pub fn new(command: &'static str) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            started: Instant::now(),
            started_unix,
            command,
            seed: None,
            config: Value::Null,
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn write(self, out: &Path) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            library_version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            threads: rayon::current_num_threads(),
            config: self.config,
            outputs: self.outputs,
            summary: self.summary,
            started_unix_secs: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(out);
        write_json(&path, &to_json(&manifest))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(serde_json::to_string(&json_f64(0.1)).unwrap(), "1.0000000000000001e-1");
        assert_eq!(json_f64(f64::NAN), Value::Null);
        let v = with_full_precision(serde_json::json!({"a": [0.5, 3], "b": "x"}));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"a":[5.0000000000000000e-1,3],"b":"x"}"#);
    }

    #[test]
    fn csv_quotes_text_with_commas() {
        assert_eq!(render(&Cell::from("a,b")), "\"a,b\"");
        assert_eq!(render(&Cell::from(1.0)), "1.0000000000000000e+0");
    }
}
