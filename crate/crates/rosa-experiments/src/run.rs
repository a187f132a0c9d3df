//! One training run per seed, written to a self-describing directory.
//!
//! Layout of `<out>/<name>/seed_<seed>/`:
//! `config-resolved.json`, `metrics.csv`, `events.jsonl` (optional),
//! `heatmap.csv` (grid envs), `diagnostics.jsonl`, `checkpoints/`, `manifest.json`.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rosa_core::agents::{save_checkpoint, train, Agents, MetricsRow, RunObserver, TransitionRecord, UpdateDiagnostics};
use rosa_core::config::{Mode, RunConfig};
use rosa_core::env::{Cell, GridSpec};
use rosa_core::RosaError;

use crate::config::load_config;
use crate::error::{ExpError, Result};
use crate::heatmap::HeatmapGrid;

/// Bumped whenever the `metrics.csv` columns change.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub episode: u64,
    pub t: usize,
    pub env_step: u64,
    pub cell: Option<Cell>,
    pub a: usize,
    pub g: u8,
    pub a2: usize,
    pub r: f64,
    pub r_i: f64,
    pub c: f64,
    pub bonus: f64,
    /// Reward added on top of the extrinsic one at this step, before `int_coef`.
    pub shaping: f64,
    pub done: bool,
    pub truncated: bool,
    pub goal: Option<u8>,
}

/// The shaping term a mode adds at one step: `r_i * g` for shaping modes, the
/// raw bonus for `rnd_bonus`, nothing for `vanilla`.
pub fn shaping_term(mode: Mode, rec: &TransitionRecord) -> f64 {
    match mode {
        Mode::Vanilla => 0.0,
        Mode::RndBonus => rec.bonus,
        Mode::Rosa | Mode::RosaNoSwitch | Mode::PbrsFixed => rec.r_i * f64::from(rec.g),
    }
}

impl EventRecord {
    pub fn from_record(rec: &TransitionRecord, mode: Mode) -> Self {
        EventRecord {
            episode: rec.episode,
            t: rec.t,
            env_step: rec.env_step,
            cell: rec.cell,
            a: rec.a,
            g: rec.g,
            a2: rec.a2,
            r: rec.r,
            r_i: rec.r_i,
            c: rec.c,
            bonus: rec.bonus,
            shaping: shaping_term(mode, rec),
            done: rec.done,
            truncated: rec.truncated,
            goal: rec.goal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub metrics_schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: usize,
    pub updates: usize,
    pub files: Vec<String>,
}

/// Summary of a finished seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes: Vec<MetricsRow>,
    pub env_steps: u64,
    pub updates: usize,
    pub heatmap: Option<HeatmapGrid>,
}

pub fn seed_dir(out_root: &Path, name: &str, seed: u64) -> PathBuf {
    out_root.join(name).join(format!("seed_{seed}"))
}

fn io_err(e: std::io::Error) -> RosaError {
    RosaError::Io(e)
}

/// Streams a run's outputs to disk as training progresses.
struct RunWriter {
    dir: PathBuf,
    mode: Mode,
    wall_time: bool,
    checkpoint_every: usize,
    metrics: csv::Writer<File>,
    events: Option<BufWriter<File>>,
    diagnostics: BufWriter<File>,
    heatmap: Option<HeatmapGrid>,
    started: Instant,
    fault_checkpoint: Option<PathBuf>,
    last_update: usize,
    last_steps: u64,
}

impl RunWriter {
    fn create(dir: &Path, cfg: &RunConfig, spec: Option<&GridSpec>) -> Result<Self> {
        let metrics_path = dir.join("metrics.csv");
        let metrics = csv::Writer::from_path(&metrics_path)
            .map_err(|e| ExpError::Io { path: metrics_path, source: e.into() })?;
        let events = if cfg.output.events {
            let p = dir.join("events.jsonl");
            Some(BufWriter::new(File::create(&p).map_err(ExpError::io(p))?))
        } else {
            None
        };
        let p = dir.join("diagnostics.jsonl");
        let diagnostics = BufWriter::new(File::create(&p).map_err(ExpError::io(p))?);
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            mode: cfg.mode,
            wall_time: cfg.output.wall_time_in_metrics,
            checkpoint_every: cfg.output.checkpoint_every,
            metrics,
            events,
            diagnostics,
            heatmap: spec.map(|s| HeatmapGrid::new(s.width, s.height)),
            started: Instant::now(),
            fault_checkpoint: None,
            last_update: 0,
            last_steps: 0,
        })
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.metrics.flush()?;
        if let Some(ev) = self.events.as_mut() {
            ev.flush()?;
        }
        self.diagnostics.flush()
    }
}

impl RunObserver for RunWriter {
    fn on_step(&mut self, rec: &TransitionRecord) -> rosa_core::Result<()> {
        let ev = EventRecord::from_record(rec, self.mode);
        if let (Some(grid), Some(cell)) = (self.heatmap.as_mut(), ev.cell) {
            grid.add(cell, ev.shaping);
        }
        if let Some(out) = self.events.as_mut() {
            serde_json::to_writer(&mut *out, &ev).map_err(|e| io_err(e.into()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        Ok(())
    }

    fn on_episode(&mut self, row: &MetricsRow) -> rosa_core::Result<()> {
        let mut row = row.clone();
        if !self.wall_time {
            row.wall_ms = 0;
        }
        self.metrics.serialize(&row).map_err(|e| io_err(e.into()))
    }

    fn on_update(&mut self, diag: &UpdateDiagnostics, agents: &Agents) -> rosa_core::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            wall_ms: u64,
            #[serde(flatten)]
            diag: &'a UpdateDiagnostics,
        }
        let line = Line { wall_ms: self.started.elapsed().as_millis() as u64, diag };
        serde_json::to_writer(&mut self.diagnostics, &line).map_err(|e| io_err(e.into()))?;
        self.diagnostics.write_all(b"\n").map_err(io_err)?;
        self.last_update = diag.update;
        self.last_steps = diag.env_steps;
        if self.checkpoint_every > 0 && (diag.update + 1) % self.checkpoint_every == 0 {
            let dir = self.dir.join("checkpoints").join(format!("update_{:06}", diag.update + 1));
            save_checkpoint(agents, &dir, diag.update + 1, diag.env_steps)?;
        }
        Ok(())
    }

    fn on_fault(&mut self, agents: &Agents, err: &RosaError) {
        log::error!("run fault in {}: {err}", self.dir.display());
        let _ = self.flush();
        let dir = self.dir.join("checkpoints").join("fault");
        match save_checkpoint(agents, &dir, self.last_update, self.last_steps) {
            Ok(_) => self.fault_checkpoint = Some(dir),
            Err(e) => log::error!("could not save fault checkpoint: {e}"),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ExpError::Io { path: path.into(), source: e.into() })?;
    std::fs::write(path, text + "\n").map_err(ExpError::io(path))
}

/// Train one seed and write its run directory, replacing any previous one.
pub fn run_seed(cfg: &RunConfig, seed: u64, out_root: &Path) -> Result<SeedRun> {
    cfg.validate().map_err(|e| ExpError::Config(e.to_string()))?;
    let spec = cfg.env.grid_spec().map_err(|e| ExpError::Config(e.to_string()))?;
    let dir = seed_dir(out_root, &cfg.name, seed);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(ExpError::io(&dir))?;
    }
    std::fs::create_dir_all(&dir).map_err(ExpError::io(&dir))?;
    let mut resolved = cfg.clone();
    resolved.seeds = vec![seed];
    write_json(&dir.join("config-resolved.json"), &resolved)?;

    let mut writer = RunWriter::create(&dir, &resolved, spec.as_ref())?;
    log::info!("run {} seed {seed}: {} steps", cfg.name, cfg.total_steps);
    let outcome = match train(&resolved, seed, &mut writer) {
        Ok(o) => o,
        Err(source) => {
            let _ = writer.flush();
            return Err(ExpError::Fault { source, checkpoint: writer.fault_checkpoint.clone() });
        }
    };
    writer.flush().map_err(ExpError::io(&dir))?;
    save_checkpoint(&outcome.agents, &dir.join("checkpoints").join("final"), outcome.updates, outcome.env_steps)?;

    let mut files = vec!["config-resolved.json".to_string(), "metrics.csv".into(), "diagnostics.jsonl".into()];
    if resolved.output.events {
        files.push("events.jsonl".into());
    }
    if let Some(grid) = &writer.heatmap {
        grid.write_csv(&dir.join("heatmap.csv"))?;
        files.push("heatmap.csv".into());
    }
    files.push("checkpoints/final".into());
    let manifest = Manifest {
        metrics_schema_version: METRICS_SCHEMA_VERSION,
        name: cfg.name.clone(),
        mode: cfg.mode,
        seed,
        env_steps: outcome.env_steps,
        episodes: outcome.episodes.len(),
        updates: outcome.updates,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!(
        "run {} seed {seed}: {} episodes, {} updates, {} env steps",
        cfg.name,
        outcome.episodes.len(),
        outcome.updates,
        outcome.env_steps
    );
    Ok(SeedRun {
        seed,
        dir,
        episodes: outcome.episodes,
        env_steps: outcome.env_steps,
        updates: outcome.updates,
        heatmap: writer.heatmap.take(),
    })
}

/// Run every seed of a config (or just `seed_override`) sequentially.
/// `out_dir` defaults to the config's `output.dir`.
pub fn run(config_path: &Path, seed_override: Option<u64>, out_dir: Option<&Path>) -> Result<Vec<SeedRun>> {
    let cfg = load_config(config_path)?;
    run_config(&cfg, seed_override, out_dir)
}

pub fn run_config(cfg: &RunConfig, seed_override: Option<u64>, out_dir: Option<&Path>) -> Result<Vec<SeedRun>> {
    let out = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    let seeds = match seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    seeds.into_iter().map(|s| run_seed(cfg, s, &out)).collect()
}
