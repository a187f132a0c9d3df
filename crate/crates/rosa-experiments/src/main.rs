//! `rosa` command-line entry point.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use rosa_experiments::analysis::{final_mean_return, final_window, GoalLabels};
use rosa_experiments::heatmap::{read_heatmap_csv, run_layout, shaping_heatmap, HeatmapGrid};
use rosa_experiments::oracle::{check_instances, format_report};
use rosa_experiments::plot::emit_plot;
use rosa_experiments::run::run;
use rosa_experiments::sweep::{sweep, DEFAULT_FINAL_WINDOW};
use rosa_experiments::{ExpError, Result};

#[derive(Parser)]
#[command(name = "rosa", about = "Reward shaping with switching controls: training runs, sweeps, oracle checks and plots")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a config (or one seed) and write run directories.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output root; defaults to the config's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all configs matching a glob, in parallel over seeds.
    Sweep {
        #[arg(long)]
        glob: String,
        #[arg(short = 'j', long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Episodes in the final window of the summary.
        #[arg(long, default_value_t = DEFAULT_FINAL_WINDOW)]
        window: usize,
    },
    /// Check the tabular property suite on every `.mg` file in a directory.
    Oracle {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learning curves (mean and std band over seeds) as SVG.
    Plot {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Trailing moving-average window in episodes.
        #[arg(long, default_value_t = 10)]
        smooth: usize,
    },
    /// Print a run's per-cell mean shaping and its red-herring mass share.
    Heatmap {
        #[arg(long)]
        run: PathBuf,
    },
}

fn print_grid(grid: &HeatmapGrid) {
    for r in 0..grid.height {
        let cells: Vec<String> = (0..grid.width)
            .map(|c| if grid.count((r, c)) == 0 { format!("{:>8}", ".") } else { format!("{:>8.4}", grid.mean((r, c))) })
            .collect();
        println!("{}", cells.join(""));
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            for r in run(&config, seed, out.as_deref())? {
                let ret = final_mean_return(&r.episodes, DEFAULT_FINAL_WINDOW).unwrap_or(f64::NAN);
                println!("{}: {} episodes, final mean return {ret:.4}", r.dir.display(), r.episodes.len());
            }
            Ok(true)
        }
        Cmd::Sweep { glob, jobs, out, window } => {
            for row in sweep(&glob, jobs, &out, window)? {
                println!(
                    "{} ({:?}, {} seeds): final mean return {:.4} +- {:.4}",
                    row.name, row.mode, row.seeds, row.final_return_mean, row.final_return_std
                );
            }
            println!("summary: {}", out.join("sweep-summary.csv").display());
            Ok(true)
        }
        Cmd::Oracle { instances, seed } => {
            let reports = check_instances(&instances, seed)?;
            print!("{}", format_report(&reports));
            let failed = reports.iter().filter(|r| r.failed()).count();
            println!("{} instances, {failed} with failures", reports.len());
            Ok(failed == 0)
        }
        Cmd::Plot { inputs, out, smooth } => {
            emit_plot(&inputs, &out, smooth)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Cmd::Heatmap { run } => {
            let (_, spec) = run_layout(&run)?;
            let grid = if run.join("events.jsonl").exists() {
                shaping_heatmap(&run)?
            } else {
                read_heatmap_csv(&run.join("heatmap.csv"), spec.width, spec.height)?
            };
            print_grid(&grid);
            println!("total shaping {:.6}, absolute mass {:.6}", grid.total_sum(), grid.total_abs_mass());
            if !spec.herring.is_empty() {
                match grid.herring_mass_ratio(&spec)? {
                    Some(x) => println!("red-herring mass share {x:.4} (region covers {:.4} of free cells)", spec.herring_fraction()),
                    None => println!("red-herring mass share undefined: no shaping added"),
                }
            }
            if let (Ok(labels), Ok(rows)) = (GoalLabels::from_spec(&spec), rosa_experiments::analysis::read_metrics(&run.join("metrics.csv"))) {
                if let Ok(w) = final_window(&rows, DEFAULT_FINAL_WINDOW, &labels) {
                    println!("final window: optimal {:.3}, suboptimal {:.3}, none {:.3}", w.p_optimal, w.p_suboptimal, w.p_none);
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROSA_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let ExpError::Fault { checkpoint: Some(p), .. } = &e {
                eprintln!("last consistent parameters: {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
