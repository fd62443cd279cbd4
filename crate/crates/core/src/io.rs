//! CSV datasets with `%.12g` numbers and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::runner::Failure;
use crate::error::{Error, Result};

/// Formats like C's `%.12g`.
pub fn fmt_g12(v: f64) -> String {
    fmt_g(v, 12)
}

fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    // the exponent after rounding to p significant digits decides the style
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Blank,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_g12(*v),
            Cell::Text(s) => quote(s),
            Cell::Blank => String::new(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Blank, Cell::from)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CAPACITY_HEADER: &[&str] = &[
    "n_modes",
    "reflectivity",
    "m_pulses",
    "delay",
    "capacity_mean",
    "capacity_stderr",
    "realizations",
];

pub const IPC_HEADER: &[&str] = &[
    "n_modes",
    "reflectivity",
    "m_pulses",
    "degree",
    "capacity_sum",
    "total_ipc",
    "normalized_ipc",
    "realizations",
    "scenario",
];

pub const SNR_HEADER: &[&str] = &[
    "n_modes",
    "reflectivity",
    "m_pulses",
    "delay",
    "snr_db_mean",
    "snr_db_stderr",
    "fitted_slope_db",
    "fitted_height_db",
    "realizations",
];

pub const VALIDATE_HEADER: &[&str] = &["check", "passed", "measured", "expected", "tolerance"];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::dim("Table::push", self.header.len(), row.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Everything needed to rerun and check a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub task: String,
    pub master_seed: u64,
    /// Resolved configuration, defaults included, as TOML.
    pub config: String,
    pub realization_seeds: Vec<u64>,
    pub files: Vec<FileRecord>,
    pub timings: Vec<Timing>,
    pub failures: Vec<Failure>,
    pub exit_status: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes each table as `<name>.csv` under `dir` and returns their records.
pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<FileRecord>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut records = Vec::with_capacity(tables.len());
    for t in tables {
        let path = dir.join(t.file_name());
        let text = t.to_csv();
        fs::write(&path, &text).map_err(io_err(&path))?;
        records.push(FileRecord {
            file: t.file_name(),
            sha256: sha256_hex(text.as_bytes()),
            rows: t.rows.len(),
        });
    }
    Ok(records)
}

pub fn write_manifest(dir: &Path, task: &str, manifest: &RunManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{task}_manifest.json"));
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Input(format!("manifest serialization failed: {e}")))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
