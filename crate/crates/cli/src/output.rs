//! CSV artifacts and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// One CSV artifact: a header naming columns with units, then numeric rows.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(self.file_name());
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v))).map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A pass/fail identity or a reported diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `None` for diagnostics that are reported but never fail a run.
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn bound(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance: Some(tolerance),
            passed: value.abs() < tolerance,
        }
    }

    pub fn report(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance: None,
            passed: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub library_version: &'a str,
    pub task: &'a str,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub status: &'a str,
    pub checks: &'a [Check],
    /// Achieved tolerances and resolved numerical settings.
    pub achieved: &'a serde_json::Map<String, serde_json::Value>,
    pub artifacts: Vec<String>,
}

pub fn write_manifest<C: Serialize>(dir: &Path, manifest: &Manifest<'_, C>) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(format!("manifest: {e}")))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.5e-300), "-2.5000000000000000e-300");
        let back: f64 = format_number(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn checks_compare_magnitudes() {
        assert!(Check::bound("a", -1e-9, 1e-8).passed);
        assert!(!Check::bound("b", 1e-7, 1e-8).passed);
        assert!(Check::report("c", 5.0).passed);
    }
}
