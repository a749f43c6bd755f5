//! CSV and JSON artifacts.
//!
//! Numbers are written as `{:.16e}` (17 significant digits) so reruns can be diffed byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::RunError;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a numeric table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), RunError> {
    write_records(path, header, rows.into_iter().map(|r| r.into_iter().map(fmt_num).collect()))
}

/// Writes string records with a header row.
pub fn write_records(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::io(path, e))?;
    w.write_record(header).map_err(|e| RunError::io(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(RunError::Scenario(format!("row width {} does not match header in {path:?}", row.len())));
        }
        w.write_record(&row).map_err(|e| RunError::io(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioResult {
    pub id: String,
    pub mode: Mode,
    pub epsilon: Option<f64>,
    pub c: Option<f64>,
    pub sigma: Option<f64>,
    pub c_tilde: Option<f64>,
    pub ok: bool,
    pub error: Option<String>,
    pub verdict: Option<String>,
    /// Scalar results keyed by name.
    pub values: BTreeMap<String, f64>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mode: Option<Mode>,
    pub seed: u64,
    pub scenarios: Vec<ScenarioResult>,
    /// Sweep-level files, relative to the output directory.
    pub files: Vec<String>,
    pub seconds: f64,
    /// Resolved configuration, as echoed to `config.echo`.
    pub config: Option<String>,
}

impl RunSummary {
    pub fn empty() -> Self {
        Self { mode: None, seed: 0, scenarios: Vec::new(), files: Vec::new(), seconds: 0.0, config: None }
    }

    pub fn all_ok(&self) -> bool {
        self.scenarios.iter().all(|s| s.ok)
    }

    pub fn failures(&self) -> usize {
        self.scenarios.iter().filter(|s| !s.ok).count()
    }

    /// Every file the summary claims, relative to the output directory.
    pub fn manifest(&self) -> Vec<String> {
        let mut all: Vec<String> = self.files.clone();
        for s in &self.scenarios {
            all.extend(s.files.iter().cloned());
        }
        all
    }
}

/// Writes `summary.json` and, when a config is attached, `config.echo`; returns every
/// file of the run.
pub fn emit_results(summary: &RunSummary, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(out_dir).map_err(|e| RunError::io(out_dir, e))?;
    let mut written = Vec::new();
    if let Some(echo) = &summary.config {
        let path = out_dir.join("config.echo");
        fs::write(&path, echo).map_err(|e| RunError::io(&path, e))?;
        written.push(path);
    }
    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).map_err(|e| RunError::io(&path, e))?;
    fs::write(&path, json + "\n").map_err(|e| RunError::io(&path, e))?;
    written.push(path);
    written.extend(summary.manifest().iter().map(|f| out_dir.join(f)));
    Ok(written)
}

/// Attaches the config echo to a summary.
pub fn with_config(mut summary: RunSummary, config: &RunConfig) -> RunSummary {
    summary.config = Some(config.echo());
    summary.seed = config.seed;
    summary.mode = Some(config.scenario.mode);
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_summary_has_no_scenarios() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&RunSummary::empty(), dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
        assert_eq!(v["scenarios"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn tables_use_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/t.csv");
        write_table(&p, &["x", "y"], vec![vec![0.1, 1.0 / 3.0]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "x,y\n1.0000000000000001e-1,3.3333333333333331e-1\n");
        let back: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
        assert!(write_table(&p, &["x"], vec![vec![1.0, 2.0]]).is_err());
    }
}
