//! Suite results, the JSON summary and the plot-data files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }

    /// Strict lower bound, for constants that must be positive.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value > threshold,
        }
    }

    /// Strict upper bound, for constants that must be negative.
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value < threshold,
        }
    }

    /// A yes/no property, reported as value 1 (holds) or 0 with threshold 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass: ok,
        }
    }
}

/// Numeric table written as `<suite>_<tag>.csv`.
#[derive(Clone, Debug)]
pub struct Table {
    pub tag: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(tag: impl Into<String>, columns: Vec<&'static str>) -> Self {
        Table {
            tag: tag.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Comma-separated rows under a `#` comment naming the columns, readable by
    /// gnuplot with `set datafile separator ","`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub data: serde_json::Map<String, Value>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge(&mut self, other: SuiteReport) {
        self.checks.extend(other.checks);
        self.tables.extend(other.tables);
        self.data.extend(other.data);
    }
}

#[derive(Serialize)]
pub struct Summary<'a, P: Serialize> {
    pub suite: &'a str,
    pub params: &'a P,
    pub checks: &'a [Check],
    pub data: &'a serde_json::Map<String, Value>,
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes every table of the report as `<suite>_<tag>.csv`.
pub fn emit_plot_data(dir: &Path, suite: &str, report: &SuiteReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    report
        .tables
        .iter()
        .map(|t| write(dir.join(format!("{suite}_{}.csv", t.tag)), &t.to_csv()))
        .collect()
}

/// Writes `<suite>_summary.json`.
pub fn emit_summary<P: Serialize>(dir: &Path, suite: &str, params: &P, report: &SuiteReport) -> Result<PathBuf> {
    let summary = Summary {
        suite,
        params,
        checks: &report.checks,
        data: &report.data,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(dir.join(format!("{suite}_summary.json")), &(text + "\n"))
}
