//! Runs the tabular property suite over a directory of instance files.

use std::path::{Path, PathBuf};

use rosa_core::oracle::suite::{run_suite, PropertyResult};
use rosa_core::oracle::TabularMG;

use crate::error::{ExpError, Result};

#[derive(Debug, Clone)]
pub struct InstanceReport {
    pub path: PathBuf,
    pub results: Vec<PropertyResult>,
}

impl InstanceReport {
    pub fn failed(&self) -> bool {
        self.results.iter().any(|r| r.passed == Some(false))
    }
}

/// Instance files (`*.mg`) in `dir`, sorted.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(ExpError::io(dir))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(ExpError::io(dir))?.path();
        if p.extension().is_some_and(|x| x == "mg") {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(ExpError::Usage(format!("no .mg instance files in {}", dir.display())));
    }
    Ok(out)
}

pub fn check_instances(dir: &Path, seed: u64) -> Result<Vec<InstanceReport>> {
    instance_files(dir)?
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path).map_err(ExpError::io(&path))?;
            let mg = TabularMG::parse(&text).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
            Ok(InstanceReport { results: run_suite(&mg, seed), path })
        })
        .collect()
}

/// One line per (instance, property): `PASS`, `FAIL` or `N/A`.
pub fn format_report(reports: &[InstanceReport]) -> String {
    let mut out = String::new();
    for rep in reports {
        let name = rep.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for r in &rep.results {
            let verdict = match r.passed {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "N/A",
            };
            out.push_str(&format!("{verdict:4} {name} {}: {}\n", r.name, r.detail));
        }
    }
    out
}
