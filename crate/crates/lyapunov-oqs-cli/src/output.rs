//! CSV, manifest and diagnostics writers.
//!
//! Numbers are printed with Rust's shortest round-trip formatting, so the
//! files are byte-identical for identical inputs.

use std::io::Write;
use std::path::Path;

use lyapunov_oqs::linalg::CMat;
use serde::Serialize;

use crate::config::Resolved;
use crate::Failure;

pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        // no "-0" in the files
        "0".into()
    } else if (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A wide-format table with a `#` comment line above the header.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, comment: &str) -> Result<(), Failure> {
        let mut file = std::fs::File::create(path).map_err(|e| Failure::io(path, e))?;
        writeln!(file, "# {comment}").map_err(|e| Failure::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.header).map_err(|e| Failure::io(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Failure::io(path, e))?;
        }
        w.flush().map_err(|e| Failure::io(path, e))
    }
}

/// Header names and values for the upper triangle of a Hermitian matrix.
pub fn upper_triangle_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = Vec::new();
    for i in 0..n {
        for j in i..n {
            h.push(format!("Re{prefix}_{i}_{j}"));
            h.push(format!("Im{prefix}_{i}_{j}"));
        }
    }
    h
}

pub fn upper_triangle_values(m: &CMat) -> Vec<String> {
    let n = m.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(fmt(m[(i, j)].re));
            v.push(fmt(m[(i, j)].im));
        }
    }
    v
}

/// One-line echo of every resolved input, used as the CSV comment.
pub fn comment(command: &str, r: &Resolved) -> String {
    format!(
        "lyapunov-oqs {} {command} {}",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(r).unwrap_or_default()
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    units: String,
    config: &'a Resolved,
}

pub fn write_manifest(command: &str, r: &Resolved) -> Result<(), Failure> {
    let m = Manifest {
        tool: "lyapunov-oqs",
        version: env!("CARGO_PKG_VERSION"),
        command,
        units: format!("hbar = k_B = 1; energies in units of {}", r.energy_unit),
        config: r,
    };
    write_json(&r.out.join("manifest.json"), &m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn write_failure(out: &Path, command: &str, f: &Failure) -> Result<(), Failure> {
    let payload = serde_json::json!({
        "command": command,
        "status": "error",
        "exit_code": f.code,
        "message": f.message,
        "detail": f.diagnostics,
    });
    write_json(&out.join("diagnostics.json"), &payload)
}
