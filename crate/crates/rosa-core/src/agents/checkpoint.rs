use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::rollout::{Agents, BonusSource};
use crate::env::RunningScalar;
use crate::error::{Result, RosaError};
use crate::nn::Mlp;
use crate::novelty::CountTable;

/// Shape and fingerprint of one serialised network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub file: String,
    pub dims: Vec<usize>,
    pub weight_hash: u64,
}

/// Index written next to the weight blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointIndex {
    pub update: usize,
    pub env_steps: u64,
    pub nets: BTreeMap<String, BlobEntry>,
    pub bonus_stats: RunningScalar,
    pub counts: Option<CountTable>,
    /// Fixed potential as `(row, col, value)` triples.
    pub pbrs: Option<Vec<(usize, usize, f64)>>,
}

fn named_nets(agents: &Agents) -> Vec<(String, &Mlp)> {
    let mut out = vec![
        ("controller_pi".to_string(), &agents.controller.net),
        ("controller_v".to_string(), &agents.controller.value_net),
    ];
    if let Some(h) = &agents.switch {
        out.push(("switch_pi".into(), &h.net));
        out.push(("switch_v".into(), &h.value_net));
    }
    if let Some(h) = &agents.magnitude {
        out.push(("magnitude_pi".into(), &h.net));
        out.push(("magnitude_v".into(), &h.value_net));
    }
    if let Some(p) = &agents.potential {
        out.push(("potential".into(), p.mlp()));
    }
    if let Some(BonusSource::Rnd(m)) = &agents.bonus {
        out.push(("rnd_target".into(), m.target()));
        out.push(("rnd_predictor".into(), m.predictor()));
    }
    out
}

/// Write every network as little-endian `f64` blobs plus `checkpoint.json`.
pub fn save_checkpoint(agents: &Agents, dir: &Path, update: usize, env_steps: u64) -> Result<CheckpointIndex> {
    fs::create_dir_all(dir)?;
    let mut nets = BTreeMap::new();
    for (name, net) in named_nets(agents) {
        let file = format!("{name}.bin");
        fs::write(dir.join(&file), net.to_bytes())?;
        nets.insert(name, BlobEntry { file, dims: net.dims.clone(), weight_hash: net.weight_hash() });
    }
    let counts = match &agents.bonus {
        Some(BonusSource::Count(t)) => Some(t.clone()),
        _ => None,
    };
    let pbrs = agents.pbrs.as_ref().map(|t| t.iter().map(|(&(r, c), &v)| (r, c, v)).collect());
    let index = CheckpointIndex { update, env_steps, nets, bonus_stats: agents.bonus_stats.clone(), counts, pbrs };
    let json = serde_json::to_string_pretty(&index).map_err(|e| RosaError::Parse(e.to_string()))?;
    fs::write(dir.join("checkpoint.json"), json)?;
    Ok(index)
}

/// Read back the networks of a checkpoint, verifying each fingerprint.
pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointIndex, BTreeMap<String, Mlp>)> {
    let text = fs::read_to_string(dir.join("checkpoint.json"))?;
    let index: CheckpointIndex = serde_json::from_str(&text).map_err(|e| RosaError::Parse(e.to_string()))?;
    let mut nets = BTreeMap::new();
    for (name, entry) in &index.nets {
        let bytes = fs::read(dir.join(&entry.file))?;
        let net = Mlp::from_bytes(&entry.dims, &bytes)?;
        if net.weight_hash() != entry.weight_hash {
            return Err(RosaError::Parse(format!("checkpoint net '{name}' does not match its recorded hash")));
        }
        nets.insert(name.clone(), net);
    }
    Ok((index, nets))
}
