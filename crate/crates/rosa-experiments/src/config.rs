//! Loading run configs from TOML files.

use std::path::Path;

use rosa_core::config::RunConfig;

use crate::error::{ExpError, Result};

/// Parse and validate a config. Relative layout and potential paths are
/// resolved against the config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        ExpError::Config(m) => ExpError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(layout) = cfg.env.layout.as_mut() {
        if layout.is_relative() {
            *layout = base.join(&*layout);
        }
    }
    if let Some(pbrs) = cfg.pbrs.as_mut() {
        if pbrs.potential != "bfs" && Path::new(&pbrs.potential).is_relative() {
            pbrs.potential = base.join(&pbrs.potential).display().to_string();
        }
    }
    cfg.validate().map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// Parse a config from TOML text without touching the filesystem.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| ExpError::Config(e.to_string()))
}
