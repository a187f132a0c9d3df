//! Many configs times many seeds, parallel at seed granularity.

use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

use rosa_core::config::{Mode, RunConfig};

use crate::analysis::{final_mean_return, mean_std};
use crate::config::load_config;
use crate::error::{ExpError, Result};
use crate::run::run_seed;

/// Episodes in the final window used for summary returns.
pub const DEFAULT_FINAL_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub config: String,
    pub name: String,
    pub mode: Mode,
    pub seeds: usize,
    /// Mean over seeds of each seed's final-window mean extrinsic return.
    pub final_return_mean: f64,
    pub final_return_std: f64,
}

/// Configs matching `pattern`, in sorted path order.
pub fn matching_configs(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| ExpError::Usage(format!("bad glob '{pattern}': {e}")))?;
    let mut out: Vec<PathBuf> =
        paths.collect::<std::result::Result<_, _>>().map_err(|e| ExpError::Usage(e.to_string()))?;
    out.sort();
    if out.is_empty() {
        return Err(ExpError::Usage(format!("no configs match '{pattern}'")));
    }
    Ok(out)
}

/// Run every seed of every config under `out_root` with `jobs` worker
/// threads, then write `out_root/sweep-summary.csv`.
pub fn sweep(pattern: &str, jobs: usize, out_root: &Path, window: usize) -> Result<Vec<SummaryRow>> {
    let paths = matching_configs(pattern)?;
    let configs: Vec<(PathBuf, RunConfig)> =
        paths.into_iter().map(|p| load_config(&p).map(|c| (p, c))).collect::<Result<_>>()?;
    let mut names: Vec<&str> = configs.iter().map(|(_, c)| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(ExpError::Config(format!("two configs share the run name '{}'", w[0])));
    }
    let tasks: Vec<(usize, u64)> =
        configs.iter().enumerate().flat_map(|(k, (_, c))| c.seeds.iter().map(move |&s| (k, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExpError::Usage(format!("thread pool: {e}")))?;
    let finals: Vec<(usize, f64)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, seed)| {
                let run = run_seed(&configs[k].1, seed, out_root)?;
                Ok((k, final_mean_return(&run.episodes, window).unwrap_or(f64::NAN)))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rows: Vec<SummaryRow> = configs
        .iter()
        .enumerate()
        .map(|(k, (path, cfg))| {
            let xs: Vec<f64> = finals.iter().filter(|(j, _)| *j == k).map(|(_, x)| *x).collect();
            let (m, sd) = mean_std(&xs);
            SummaryRow {
                config: path.display().to_string(),
                name: cfg.name.clone(),
                mode: cfg.mode,
                seeds: xs.len(),
                final_return_mean: m,
                final_return_std: sd,
            }
        })
        .collect();
    std::fs::create_dir_all(out_root).map_err(ExpError::io(out_root))?;
    let path = out_root.join("sweep-summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| ExpError::Io { path: path.clone(), source: e.into() })?;
    for row in &rows {
        w.serialize(row).map_err(|e| ExpError::Io { path: path.clone(), source: e.into() })?;
    }
    w.flush().map_err(ExpError::io(&path))?;
    Ok(rows)
}
