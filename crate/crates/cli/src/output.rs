//! Result emission: results.json, CSV tables, manifest and plot script.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::plots::plot_script;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
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
impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Shortest round-trip decimal, scientific outside [1e-4, 1e15).
pub fn format_float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// A CSV table with a unit per column ("1" for dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|(c, u)| (c.to_string(), u.to_string())).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch in table {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|(c, _)| c.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Everything an experiment produces; on failure `results` holds what was finished.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub status: Status,
    pub error: Option<String>,
    pub results: Value,
    pub tables: Vec<Table>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn results_json(config: &Config, out: &RunOutput) -> Vec<u8> {
    let doc = json!({
        "experiment": config.kind().name(),
        "seed": config.seed(),
        "status": out.status,
        "error": out.error,
        "results": out.results,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("results serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes every artifact into `dir` and returns the paths written.
pub fn write_outputs(dir: &Path, config: &Config, out: &RunOutput) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, Vec<u8>)> = vec![("results.json".into(), results_json(config, out))];
    for t in &out.tables {
        files.push((t.file_name(), t.to_csv()?));
    }
    let script = format!("plot_{}.py", config.kind().name());
    files.push((script, plot_script(config.kind(), &out.tables).into_bytes()));

    let resolved = config.to_json();
    let canonical = serde_json::to_vec(&resolved).expect("config serializes");
    let units: serde_json::Map<String, Value> = out
        .tables
        .iter()
        .map(|t| {
            let cols: serde_json::Map<String, Value> = t.columns.iter().map(|(c, u)| (c.clone(), Value::String(u.clone()))).collect();
            (t.file_name(), Value::Object(cols))
        })
        .collect();
    let manifest = json!({
        "tool": "ipslab",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.kind().name(),
        "seed": config.seed(),
        "status": out.status,
        "created": chrono::Utc::now().to_rfc3339(),
        "config": resolved,
        "config_sha256": sha256_hex(&canonical),
        "files": files.iter().map(|(name, bytes)| json!({"path": name, "sha256": sha256_hex(bytes)})).collect::<Vec<_>>(),
        "units": units,
    });
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    files.push(("manifest.json".into(), manifest_bytes));

    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(1e-5), "1e-5");
        assert_eq!(format_float(-2.5e-7), "-2.5e-7");
        assert_eq!(format_float(1e15), "1e15");
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(f64::NAN), "nan");
        let v = 0.1 + 0.2;
        assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut t = Table::new("demo", &[("kappa", "1"), ("p", "1"), ("note", "")]);
        t.push(vec![4.0.into(), Cell::Empty, "a,b".into()]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "kappa,p,note\n4,,\"a,b\"\n");
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
