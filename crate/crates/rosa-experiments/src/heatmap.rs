//! Per-cell aggregation of the shaping reward a run added.

use serde::Deserialize;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rosa_core::config::RunConfig;
use rosa_core::env::{Cell, GridSpec};

use crate::error::{ExpError, Result};
use crate::run::EventRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
    /// Row-major sums of the shaping term over visits.
    pub sum: Vec<f64>,
    /// Row-major sums of the absolute shaping term.
    pub abs_sum: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        HeatmapGrid { width, height, sum: vec![0.0; n], abs_sum: vec![0.0; n], counts: vec![0; n] }
    }

    fn idx(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    pub fn add(&mut self, cell: Cell, value: f64) {
        let i = self.idx(cell);
        self.sum[i] += value;
        self.abs_sum[i] += value.abs();
        self.counts[i] += 1;
    }

    pub fn count(&self, cell: Cell) -> u64 {
        self.counts[self.idx(cell)]
    }

    /// Mean shaping per visit; zero for unvisited cells.
    pub fn mean(&self, cell: Cell) -> f64 {
        let i = self.idx(cell);
        if self.counts[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.counts[i] as f64
        }
    }

    pub fn total_sum(&self) -> f64 {
        self.sum.iter().sum()
    }

    pub fn total_abs_mass(&self) -> f64 {
        self.abs_sum.iter().sum()
    }

    /// Share of absolute shaping mass that landed in `region`; `None` when
    /// the run added no shaping at all.
    pub fn mass_ratio<'a>(&self, region: impl IntoIterator<Item = &'a Cell>) -> Option<f64> {
        let total = self.total_abs_mass();
        if total == 0.0 {
            return None;
        }
        let inside: f64 = region.into_iter().map(|&c| self.abs_sum[self.idx(c)]).sum();
        Some(inside / total)
    }

    /// Share of absolute shaping mass in the layout's red-herring cells.
    pub fn herring_mass_ratio(&self, spec: &GridSpec) -> Result<Option<f64>> {
        if spec.herring.is_empty() {
            return Err(ExpError::Usage("layout has no red-herring region".into()));
        }
        Ok(self.mass_ratio(&spec.herring))
    }

    /// `row,col,visits,sum,abs_sum,mean` for every cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ExpError::Io { path: path.into(), source: e.into() })?;
        let wrap = |e: csv::Error| ExpError::Io { path: path.into(), source: e.into() };
        w.write_record(["row", "col", "visits", "sum", "abs_sum", "mean"]).map_err(wrap)?;
        for r in 0..self.height {
            for c in 0..self.width {
                let i = self.idx((r, c));
                w.serialize((r, c, self.counts[i], self.sum[i], self.abs_sum[i], self.mean((r, c)))).map_err(wrap)?;
            }
        }
        w.flush().map_err(ExpError::io(path))
    }

    /// Accumulate events into a grid of the given size.
    pub fn from_events<'a>(width: usize, height: usize, events: impl IntoIterator<Item = &'a EventRecord>) -> Result<Self> {
        let mut grid = HeatmapGrid::new(width, height);
        for ev in events {
            let cell = ev.cell.ok_or_else(|| ExpError::Usage("event without a grid cell".into()))?;
            if cell.0 >= height || cell.1 >= width {
                return Err(ExpError::Usage(format!("event cell {cell:?} outside a {height}x{width} grid")));
            }
            grid.add(cell, ev.shaping);
        }
        Ok(grid)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(ExpError::io(path))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(ExpError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| ExpError::Config(format!("{} line {}: {e}", path.display(), k + 1)))?;
        out.push(ev);
    }
    Ok(out)
}

/// The run's resolved config and grid layout.
pub fn run_layout(run_dir: &Path) -> Result<(RunConfig, GridSpec)> {
    let path = run_dir.join("config-resolved.json");
    let text = std::fs::read_to_string(&path).map_err(ExpError::io(&path))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
    match cfg.env.grid_spec().map_err(|e| ExpError::Config(e.to_string()))? {
        Some(spec) => Ok((cfg, spec)),
        None => Err(ExpError::Usage(format!("{} is not a grid run", run_dir.display()))),
    }
}

/// Rebuild a run's heatmap from its event log.
pub fn shaping_heatmap(run_dir: &Path) -> Result<HeatmapGrid> {
    let (_, spec) = run_layout(run_dir)?;
    let path = run_dir.join("events.jsonl");
    if !path.exists() {
        return Err(ExpError::Usage(format!("{} has no events.jsonl (set output.events = true)", run_dir.display())));
    }
    let events = read_events(&path)?;
    HeatmapGrid::from_events(spec.width, spec.height, &events)
}

#[derive(Debug, Deserialize)]
struct HeatmapCsvRow {
    row: usize,
    col: usize,
    visits: u64,
    sum: f64,
    abs_sum: f64,
}

/// Load a `heatmap.csv` written by a run.
pub fn read_heatmap_csv(path: &Path, width: usize, height: usize) -> Result<HeatmapGrid> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| ExpError::Io { path: path.into(), source: e.into() })?;
    let mut grid = HeatmapGrid::new(width, height);
    for row in rdr.deserialize() {
        let row: HeatmapCsvRow = row.map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
        if row.row >= height || row.col >= width {
            return Err(ExpError::Config(format!("{}: cell ({}, {}) outside the grid", path.display(), row.row, row.col)));
        }
        let i = grid.idx((row.row, row.col));
        grid.sum[i] = row.sum;
        grid.abs_sum[i] = row.abs_sum;
        grid.counts[i] = row.visits;
    }
    Ok(grid)
}
