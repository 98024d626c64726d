//! CSV and JSON writers. Every file carries the config hash and the tolerance
//! block; numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::{Format, LoadedConfig, OutputBlock};

/// Where and how a command writes its results.
pub struct Sink {
    dir: PathBuf,
    sha256: String,
    tolerance: serde_json::Value,
    tolerance_line: String,
    csv: bool,
    json: bool,
    written: Vec<PathBuf>,
}

impl Sink {
    /// Creates the output directory and checks that it accepts files.
    pub fn open(cfg: &LoadedConfig) -> anyhow::Result<Self> {
        let OutputBlock { directory, .. } = &cfg.config.output;
        fs::create_dir_all(directory).with_context(|| format!("output.directory {}", directory.display()))?;
        let probe = directory.join(".roadfield-write-test");
        fs::write(&probe, b"").with_context(|| format!("output.directory {} is not writable", directory.display()))?;
        fs::remove_file(&probe).ok();
        Ok(Sink {
            dir: directory.clone(),
            sha256: cfg.sha256.clone(),
            tolerance: serde_json::to_value(cfg.config.tolerance).expect("tolerance block serializes"),
            tolerance_line: cfg.tolerance_json(),
            csv: cfg.config.output.wants(Format::Csv),
            json: cfg.config.output.wants(Format::Json),
            written: Vec::new(),
        })
    }

    pub fn wants_csv(&self) -> bool {
        self.csv
    }

    pub fn wants_json(&self) -> bool {
        self.json
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` unconditionally as CSV.
    pub fn csv(&mut self, name: &str, table: &Table) -> anyhow::Result<()> {
        let mut text = String::new();
        writeln!(text, "# config_sha256 {}", self.sha256).unwrap();
        writeln!(text, "# tolerance {}", self.tolerance_line).unwrap();
        text.push_str(&table.columns.join(","));
        text.push('\n');
        for row in &table.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, text)
    }

    /// Writes `name` unconditionally as JSON, wrapped with the config hash and
    /// tolerance block.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> anyhow::Result<()> {
        let doc = serde_json::json!({
            "config_sha256": self.sha256,
            "tolerance": self.tolerance,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).context("serializing result")?;
        text.push('\n');
        self.write(name, text)
    }

    fn write(&mut self, name: &str, text: String) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

/// Rows of preformatted cells.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `x` with 17 significant digits, `.` as decimal separator.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn int(x: usize) -> String {
    x.to_string()
}

pub fn flag(b: bool) -> String {
    b.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
