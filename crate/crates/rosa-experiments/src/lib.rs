//! Config-driven experiment runner: per-seed run directories, goal-arrival
//! statistics, shaping heatmaps, SVG learning curves and batch sweeps.

pub mod analysis;
pub mod config;
pub mod error;
pub mod heatmap;
pub mod oracle;
pub mod plot;
pub mod run;
pub mod sweep;

pub use error::{ExpError, Result};
