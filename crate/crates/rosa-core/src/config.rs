//! Run configuration: the serialisation root of an experiment.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::env::{builtin_layout, CartpoleParams, EnvInstance, GridSpec, ObsEncoding, Preprocessing};
use crate::error::{Result, RosaError};
use crate::shaping::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Controller plus learned switching and magnitude policies.
    Rosa,
    /// Controller alone on the extrinsic reward.
    Vanilla,
    /// Controller with the novelty bonus added directly to its reward.
    RndBonus,
    /// Controller with a fixed hand-crafted potential.
    PbrsFixed,
    /// Shaping in every state (switch forced on).
    RosaNoSwitch,
}

impl Mode {
    pub fn has_shaper(self) -> bool {
        matches!(self, Mode::Rosa | Mode::RosaNoSwitch)
    }

    pub fn uses_novelty(self) -> bool {
        matches!(self, Mode::Rosa | Mode::RosaNoSwitch | Mode::RndBonus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// `two_goal`, `subgoal`, `red_herring`, `corridor`, `grid` (custom layout) or `cartpole`.
    pub name: String,
    /// Layout file; required for `grid`, optional override for the named mazes.
    pub layout: Option<PathBuf>,
    pub encoding: ObsEncoding,
    pub preprocessing: Preprocessing,
    pub cartpole: CartpoleParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            name: "two_goal".into(),
            layout: None,
            encoding: ObsEncoding::OneHot,
            preprocessing: Preprocessing::default(),
            cartpole: CartpoleParams::default(),
        }
    }
}

impl EnvConfig {
    /// Grid layout for grid environments, `None` for cartpole.
    pub fn grid_spec(&self) -> Result<Option<GridSpec>> {
        if self.name == "cartpole" {
            return Ok(None);
        }
        let builtin = builtin_layout(&self.name);
        if builtin.is_none() && self.name != "grid" {
            return Err(RosaError::Construction(format!("unknown environment '{}'", self.name)));
        }
        let spec = match &self.layout {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| RosaError::Construction(format!("layout {}: {e}", path.display())))?;
                GridSpec::parse(&text)?
            }
            None => match builtin {
                Some((text, _)) => GridSpec::parse(text)?,
                None => return Err(RosaError::Construction("env 'grid' needs a layout path".into())),
            },
        };
        spec.validate()?;
        if let Some((_, check)) = builtin {
            check(&spec)?;
        }
        Ok(Some(spec))
    }

    pub fn build(&self) -> Result<EnvInstance> {
        match self.grid_spec()? {
            Some(spec) => EnvInstance::grid(spec, self.encoding, self.preprocessing.clone()),
            None => Ok(EnvInstance::cartpole(self.cartpole.clone(), self.preprocessing.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lam: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub rollout_len: usize,
    pub grad_norm_clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
    /// Weight on the extrinsic reward in the controller's objective.
    pub ext_coef: f64,
    /// Weight on the shaping (or bonus) term in the controller's objective.
    pub int_coef: f64,
    pub num_envs: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            clip_eps: 0.2,
            gamma: 0.99,
            lam: 0.95,
            lr: 1e-4,
            epochs: 4,
            minibatches: 4,
            rollout_len: 128,
            grad_norm_clip: 1.0,
            ent_coef: 0.01,
            vf_coef: 0.5,
            normalize_advantages: true,
            hidden: vec![64, 64],
            ext_coef: 1.0,
            int_coef: 1.0,
            num_envs: 1,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RosaError::Construction(format!("ppo: {m}")));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return bad("lam must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_len == 0 || self.num_envs == 0 {
            return bad("epochs, minibatches, rollout_len and num_envs must be positive");
        }
        if self.minibatches > self.rollout_len * self.num_envs {
            return bad("more minibatches than samples per rollout");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingMode {
    /// The switching policy is consulted in every state.
    #[default]
    Policy,
    /// Once on, shaping persists while the novelty keeps increasing.
    Option,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardAssembly {
    /// `r + r_i * g + c + L`.
    #[default]
    Hatted,
    /// `r + c + L`: the shaping term is dropped since it telescopes.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShaperConfig {
    /// Number of non-null shaper actions (output size of the potential net).
    pub m: usize,
    pub potential_hidden: Vec<usize>,
    pub switching: SwitchingMode,
    pub assembly: RewardAssembly,
    /// Strictly negative cost per switch-on event.
    pub switch_cost: f64,
    /// Continuation probability p of the option-mode termination rule.
    pub termination_prob: f64,
    /// Weight on the novelty bonus in the shaper's reward.
    pub bonus_coef: f64,
    pub direction: Direction,
    pub lr: f64,
}

impl Default for ShaperConfig {
    fn default() -> Self {
        ShaperConfig {
            m: 8,
            potential_hidden: vec![64, 64],
            switching: SwitchingMode::Policy,
            assembly: RewardAssembly::Hatted,
            switch_cost: -0.1,
            termination_prob: 0.9,
            bonus_coef: 1.0,
            direction: Direction::Forward,
            lr: 1e-4,
        }
    }
}

impl ShaperConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RosaError::Construction(format!("shaper: {m}")));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if !(self.switch_cost < 0.0) {
            return bad("switch_cost must be strictly negative");
        }
        if !(self.termination_prob > 0.0 && self.termination_prob <= 1.0) {
            return bad("termination_prob must lie in (0, 1]");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyKind {
    #[default]
    Rnd,
    /// Tabular visit counts (grid environments only).
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltyConfig {
    pub kind: NoveltyKind,
    /// RND output size.
    pub k: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Divide bonuses by their running standard deviation.
    pub normalize: bool,
    /// Count bonus scale.
    pub beta: f64,
    /// Count bonus cap: zero bonus once a state has been visited this often.
    pub cap: Option<u64>,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig { kind: NoveltyKind::Rnd, k: 8, hidden: vec![64, 64], lr: 1e-4, normalize: true, beta: 1.0, cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbrsConfig {
    /// `bfs` for the negative distance to the best goal, or a path to a
    /// whitespace-separated table of potentials (one row per grid row).
    pub potential: String,
    /// Multiplier on the potential; `None` scales BFS distances into `[-1, 0]`.
    pub scale: Option<f64>,
}

impl Default for PbrsConfig {
    fn default() -> Self {
        PbrsConfig { potential: "bfs".into(), scale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write one `events.jsonl` record per environment step.
    pub events: bool,
    /// Write checkpoints every this many updates (0 disables periodic checkpoints; the final one is always written).
    pub checkpoint_every: usize,
    /// Fill the `wall_ms` column of `metrics.csv`. Off by default so the file is byte-reproducible.
    pub wall_time_in_metrics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("runs"), events: true, checkpoint_every: 0, wall_time_in_metrics: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Environment-step budget per seed.
    pub total_steps: u64,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PPOConfig,
    #[serde(default)]
    pub shaper: ShaperConfig,
    #[serde(default)]
    pub novelty: NoveltyConfig,
    #[serde(default)]
    pub pbrs: Option<PbrsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn default_for(name: &str, mode: Mode) -> Self {
        RunConfig {
            name: name.into(),
            mode,
            seeds: vec![0],
            total_steps: 10_000,
            env: EnvConfig::default(),
            ppo: PPOConfig::default(),
            shaper: ShaperConfig::default(),
            novelty: NoveltyConfig::default(),
            pbrs: if mode == Mode::PbrsFixed { Some(PbrsConfig::default()) } else { None },
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RosaError::Construction(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be non-empty and contain no path separators".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        if self.mode == Mode::PbrsFixed && self.pbrs.is_none() {
            return bad("mode pbrs_fixed needs a [pbrs] section".into());
        }
        if self.mode == Mode::PbrsFixed && self.env.name == "cartpole" {
            return bad("pbrs_fixed is defined for grid environments only".into());
        }
        if self.novelty.kind == NoveltyKind::Count && self.env.name == "cartpole" && self.mode.uses_novelty() {
            return bad("count bonuses need a discrete (grid) environment".into());
        }
        if self.env.name == "grid" && self.env.layout.is_none() {
            return bad("env 'grid' needs a layout path".into());
        }
        self.ppo.validate()?;
        self.shaper.validate()?;
        Ok(())
    }
}
