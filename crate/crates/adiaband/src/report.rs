//! Run artifacts: the versioned `report.json` document, CSV tables with
//! round-trip float formatting, and the failure manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const FAILURE_MANIFEST_FILE: &str = "failures.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtMost,
    AtLeast,
}

/// One pass/fail check with its measured value and threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            direction: Direction::AtMost,
            detail: String::new(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            direction: Direction::AtLeast,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// A fitted decay order together with its raw points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub name: String,
    pub slope: f64,
    pub required: f64,
    pub passed: bool,
    pub points: Vec<(f64, f64)>,
}

impl SlopeEntry {
    pub fn new(name: impl Into<String>, slope: f64, required: f64, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), slope, required, passed: slope >= required, points }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub assertions: Vec<Assertion>,
    pub slopes: Vec<SlopeEntry>,
    /// Logical table name -> CSV file name inside the run directory.
    pub tables: BTreeMap<String, String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed) && self.slopes.iter().all(|s| s.passed)
    }

    pub fn failures(&self) -> (Vec<&Assertion>, Vec<&SlopeEntry>) {
        (
            self.assertions.iter().filter(|a| !a.passed).collect(),
            self.slopes.iter().filter(|s| !s.passed).collect(),
        )
    }
}

/// Formats an f64 so that parsing the text reproduces the bits (Rust's
/// shortest round-trip Display).
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// A CSV table: header row plus float rows, written deterministically.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

/// Writes report.json, all CSV tables, and (on failure) the machine-readable
/// failure manifest into `dir`.
pub fn write_run(dir: &Path, report: &Report, tables: &BTreeMap<String, CsvTable>) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, file) in &report.tables {
        let table = tables.get(name).ok_or_else(|| AdiabandError::Config {
            path: format!("tables.{name}"),
            message: "report references a missing table".into(),
        })?;
        fs::write(dir.join(file), table.to_csv())?;
    }
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join(REPORT_FILE), json)?;
    if !report.passed() {
        let (assertions, slopes) = report.failures();
        let manifest = serde_json::json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "experiment": report.experiment,
            "config_hash": report.config_hash,
            "failed_assertions": assertions,
            "failed_slopes": slopes,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(dir.join(FAILURE_MANIFEST_FILE), text)?;
    }
    Ok(())
}

/// Loads a completed run directory.
pub fn read_run(dir: &Path) -> Result<Report> {
    let path: PathBuf = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|_| AdiabandError::IncompleteRun(format!("missing {}", path.display())))?;
    let report: Report = serde_json::from_str(&text)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(AdiabandError::IncompleteRun(format!(
            "unsupported report schema {}",
            report.schema_version
        )));
    }
    Ok(report)
}

/// Human-readable summary: one PASS/FAIL line per check, the slope table, and
/// pointers to the data files.
pub fn summarize(report: &Report, dir: &Path) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "experiment {} (config {})",
        report.experiment, report.config_hash
    );
    for a in &report.assertions {
        let rel = match a.direction {
            Direction::AtMost => "<=",
            Direction::AtLeast => ">=",
        };
        let _ = writeln!(
            out,
            "{} {} ({:.3e} {} {:.3e}){}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.value,
            rel,
            a.threshold,
            if a.detail.is_empty() { String::new() } else { format!(" — {}", a.detail) }
        );
    }
    for s in &report.slopes {
        let _ = writeln!(
            out,
            "{} {} slope {:.3} (required >= {:.3}) over {} points",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.slope,
            s.required,
            s.points.len()
        );
    }
    for (name, file) in &report.tables {
        let _ = writeln!(out, "table {name}: {}", dir.join(file).display());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_round_trip_bit_exactly() {
        let mut t = CsvTable::new(&["h", "defect"]);
        let values = [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-13, f64::INFINITY];
        for (i, &v) in values.iter().enumerate() {
            t.push(vec![i as f64, v]);
        }
        let text = t.to_csv();
        for (line, &v) in text.lines().skip(1).zip(values.iter()) {
            let parsed: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn assertions_and_summary_formatting() {
        let report = Report {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: "projector_build".into(),
            config_hash: "0123456789abcdef".into(),
            config: serde_json::json!({}),
            assertions: vec![Assertion::at_most("idempotency defect", 1.2e-14, 1e-12)],
            slopes: vec![SlopeEntry::new("commutator", 1.4, 1.8, vec![(0.1, 1e-3)])],
            tables: BTreeMap::new(),
        };
        assert!(!report.passed());
        let text = summarize(&report, Path::new("/tmp/run"));
        assert!(text.contains("PASS idempotency defect"));
        assert!(text.contains("FAIL commutator slope 1.400"));
    }

    #[test]
    fn write_and_read_run_with_failure_manifest() {
        let dir = std::env::temp_dir().join(format!("adiaband-report-{}", std::process::id()));
        let mut tables = BTreeMap::new();
        let mut t = CsvTable::new(&["h", "d"]);
        t.push(vec![0.1, 1e-3]);
        tables.insert("defects".to_string(), t);
        let mut report = Report {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: "orthogonality".into(),
            config_hash: "feed".into(),
            config: serde_json::json!({"k": 1}),
            assertions: vec![Assertion::at_least("cross slope", 1.2, 1.8)],
            slopes: vec![],
            tables: BTreeMap::from([("defects".to_string(), "defects.csv".to_string())]),
        };
        write_run(&dir, &report, &tables).unwrap();
        assert!(dir.join(FAILURE_MANIFEST_FILE).exists());
        let back = read_run(&dir).unwrap();
        assert_eq!(back.experiment, "orthogonality");
        assert!(!back.passed());
        // passing report leaves no manifest behind from scratch
        let dir2 = dir.join("pass");
        report.assertions[0].passed = true;
        write_run(&dir2, &report, &tables).unwrap();
        assert!(!dir2.join(FAILURE_MANIFEST_FILE).exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
