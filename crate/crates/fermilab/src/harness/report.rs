use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::fit::PowerLawFit;
use crate::{Error, Result};

/// Named CSV block; the first column is the abscissa of the plot data.
#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRecord {
    pub name: String,
    pub x: String,
    pub y: String,
    /// Smallest abscissae left out of the fit.
    pub excluded: usize,
    pub fit: PowerLawFit,
}

/// One machine-readable check: `value` compared with `tolerance` under `invariant`.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub invariant: String,
    pub tolerance: f64,
    pub value: f64,
    pub passed: bool,
}

impl Assertion {
    pub fn at_most(name: &str, invariant: &str, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), invariant: invariant.into(), tolerance: bound, value, passed: value <= bound }
    }

    pub fn at_least(name: &str, invariant: &str, value: f64, bound: f64) -> Self {
        Assertion { name: name.into(), invariant: invariant.into(), tolerance: bound, value, passed: value >= bound }
    }

    pub fn near(name: &str, invariant: &str, value: f64, target: f64, tol: f64) -> Self {
        Assertion { name: name.into(), invariant: invariant.into(), tolerance: tol, value, passed: (value - target).abs() <= tol }
    }

    pub fn holds(name: &str, invariant: &str, ok: bool) -> Self {
        Assertion { name: name.into(), invariant: invariant.into(), tolerance: 0.0, value: if ok { 1.0 } else { 0.0 }, passed: ok }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub config: Option<ExperimentConfig>,
    pub notes: Vec<String>,
    /// Wall time of named parts of the run, in seconds.
    pub sections: Vec<(String, f64)>,
}

/// Encoded binary checkpoint written next to the report.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub file: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub manifest: Manifest,
    pub tables: Vec<Table>,
    pub fits: Vec<FitRecord>,
    pub assertions: Vec<Assertion>,
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
}

impl Report {
    pub fn empty(experiment: &str) -> Self {
        Report {
            manifest: Manifest {
                experiment: experiment.into(),
                config_hash: String::new(),
                code_version: env!("CARGO_PKG_VERSION").into(),
                wall_time_s: 0.0,
                config: None,
                notes: Vec::new(),
                sections: Vec::new(),
            },
            tables: Vec::new(),
            fits: Vec::new(),
            assertions: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        let mut r = Report::empty(cfg.experiment.name());
        r.manifest.config_hash = cfg.hash();
        r.manifest.config = Some(cfg.clone());
        r
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&FitRecord> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.manifest.notes.push(text.into());
    }

    /// Records the time since `start` under `name`.
    pub fn section(&mut self, name: &str, start: Instant) {
        self.manifest.sections.push((name.into(), start.elapsed().as_secs_f64()));
    }

    pub fn section_time(&self, name: &str) -> Option<f64> {
        self.manifest.sections.iter().find(|(n, _)| n == name).map(|s| s.1)
    }

    /// One `PASS`/`FAIL` line per assertion.
    pub fn summary(&self) -> String {
        self.assertions
            .iter()
            .map(|a| {
                format!(
                    "{} {}: {} (value {:.6e}, tolerance {:.3e})\n",
                    if a.passed { "PASS" } else { "FAIL" },
                    a.name,
                    a.invariant,
                    a.value,
                    a.tolerance
                )
            })
            .collect()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    }
}

fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&table.columns).map_err(|e| csv_err(path, e))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long format `table, x_name, x, series, y`.
fn write_plot_data(path: &Path, tables: &[Table]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["table", "x_name", "x", "series", "y"]).map_err(|e| csv_err(path, e))?;
    for t in tables {
        for row in &t.rows {
            for (j, name) in t.columns.iter().enumerate().skip(1) {
                let rec = [t.name.clone(), t.columns[0].clone(), row[0].to_string(), name.clone(), row[j].to_string()];
                w.write_record(&rec).map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `manifest.json`, checkpoints, one CSV per table and `plotdata.csv` into `dir`, overwriting.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "manifest": report.manifest,
        "fits": report.fits,
        "assertions": report.assertions,
        "passed": report.passed(),
        "tables": report.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        "checkpoints": report.checkpoints.iter().map(|c| c.file.clone()).collect::<Vec<_>>(),
    }))
    .map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(&manifest, json).map_err(|e| Error::io(&manifest, e))?;
    for c in &report.checkpoints {
        let path = dir.join(&c.file);
        fs::write(&path, &c.bytes).map_err(|e| Error::io(&path, e))?;
    }
    if report.tables.is_empty() {
        return Ok(());
    }
    for t in &report.tables {
        write_table(&dir.join(format!("{}.csv", t.name)), t)?;
    }
    write_plot_data(&dir.join("plotdata.csv"), &report.tables)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::empty("demo");
        let mut t = Table::new("gap_vs_N", &["n", "gap", "bound"]);
        t.push(vec![2.0, 0.5, 1.0]);
        t.push(vec![3.0, 0.25, 1.0]);
        r.tables.push(t);
        r.assertions.push(Assertion::at_most("gap", "gap <= bound", 0.5, 1.0));
        r
    }

    #[test]
    fn empty_report_writes_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&Report::empty("none"), dir.path()).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("manifest.json")]);
    }

    #[test]
    fn tables_and_long_format() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        emit_report(&r, dir.path()).unwrap();
        emit_report(&r, dir.path()).unwrap();
        let body = fs::read_to_string(dir.path().join("gap_vs_N.csv")).unwrap();
        assert_eq!(body, "n,gap,bound\n2,0.5,1\n3,0.25,1\n");
        let plot = fs::read_to_string(dir.path().join("plotdata.csv")).unwrap();
        assert_eq!(plot.lines().count(), 5);
        assert!(plot.contains("gap_vs_N,n,3,bound,1"));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["passed"], true);
        assert_eq!(m["assertions"][0]["invariant"], "gap <= bound");
        assert!(r.summary().starts_with("PASS gap"));
    }

    #[test]
    fn nan_never_passes() {
        assert!(!Assertion::at_most("x", "x <= 1", f64::NAN, 1.0).passed);
        assert!(!Assertion::near("x", "x ~ 1", f64::NAN, 1.0, 0.1).passed);
    }

    #[test]
    fn unwritable_path_reports_context() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        match emit_report(&sample(), &file.join("sub")) {
            Err(Error::Io { path, .. }) => assert!(path.starts_with(&file)),
            other => panic!("{other:?}"),
        }
    }
}
