//! CSV tables and the JSON run summary.
//!
//! Numbers are written with 17 significant digits in scientific notation
//! (`-1.2345678901234567e-3`). Rows keep the order in which they were
//! produced, which for grids is the grid index order.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn format_number(x: f64) -> String {
    // no negative zero
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().copied().map(format_number).collect());
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io {
            path: "<csv buffer>".into(),
            source: e.into_error(),
        })
    }
}

/// Everything a task produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    /// Task-specific results embedded in the summary.
    pub result: serde_json::Value,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub task: &'a str,
    pub version: &'a str,
    pub pass: bool,
    pub runtime_seconds: f64,
    pub config: &'a ExperimentConfig,
    pub data_file: Option<PathBuf>,
    pub result: &'a serde_json::Value,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `<dir>/<task>.csv` and `<dir>/summary.json`, creating `dir`.
pub fn write_outputs(dir: &Path, task: &str, csv: &[u8], summary: &Summary<'_>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join(format!("{task}.csv")), csv)?;
    let mut json = serde_json::to_vec_pretty(summary)?;
    json.push(b'\n');
    write_file(&dir.join("summary.json"), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(format_number(0.5), "5.0000000000000000e-1");
        assert_eq!(format_number(-0.0), format_number(0.0));
        assert_eq!(format_number(-1.0 / 3.0), "-3.3333333333333331e-1");
        let x = 0.1 + 0.2;
        assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["z", "label"]);
        t.push(vec![format_number(1.0), "a, b".into()]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(text, "z,label\n1.0000000000000000e0,\"a, b\"\n");
    }
}
