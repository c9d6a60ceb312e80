//! Writing reports: one file per table plus a JSON manifest holding the
//! resolved configuration, the code version and the check outcomes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Check, HarnessError, Report};

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    files: Vec<&'a str>,
    checks: &'a [Check],
    passed: bool,
}

/// Write `report` under `dir` and return the paths written. Output depends
/// only on the report and config, so reruns are byte-identical.
pub fn write_report<C: Serialize>(
    report: &Report,
    config: &C,
    seed: u64,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |p: &Path, e| HarnessError::Io(p.display().to_string(), e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(&t.file_name);
        std::fs::write(&path, &t.body).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    let manifest = Manifest {
        experiment: report.experiment.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        files: report.tables.iter().map(|t| t.file_name.as_str()).collect(),
        checks: &report.checks,
        passed: report.passed(),
    };
    let path = dir.join(format!("{}.manifest.json", report.experiment.name()));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    written.push(path);
    Ok(written)
}
