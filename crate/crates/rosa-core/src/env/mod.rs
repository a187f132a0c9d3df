//! Environments: gridworld mazes and sparse-reward cartpole behind one episodic wrapper.

pub mod cartpole;
pub mod grid;
pub mod preprocess;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{usage, Result};
pub use cartpole::{CartState, CartpoleParams};
pub use grid::{Cell, GridSpec, Terminal};
pub use preprocess::{clip_reward, ObsNormalizer, RunningMeanStd, RunningScalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObsEncoding {
    #[default]
    OneHot,
    /// Row and column scaled to `[0, 1]`.
    Coordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Preprocessing {
    pub normalize_obs: bool,
    pub obs_warmup: u64,
    pub clip_reward: bool,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing { normalize_obs: true, obs_warmup: 0, clip_reward: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub vector: Vec<f64>,
    pub preprocessed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// Terminal id reached on this step.
    pub goal: Option<u8>,
    /// Grid cell after the step.
    pub cell: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    /// Extrinsic reward after optional clipping.
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
enum Dynamics {
    Grid { spec: GridSpec, encoding: ObsEncoding, index: BTreeMap<Cell, usize>, cell: Cell },
    Cartpole { params: CartpoleParams, state: CartState },
}

/// A single-owner episodic environment.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    dynamics: Dynamics,
    pre: Preprocessing,
    normalizer: Option<ObsNormalizer>,
    rng: ChaCha8Rng,
    t: usize,
    finished: bool,
}

impl EnvInstance {
    pub fn grid(spec: GridSpec, encoding: ObsEncoding, pre: Preprocessing) -> Result<Self> {
        spec.validate()?;
        let index = spec.cell_index();
        let cell = spec.start;
        Ok(Self::wrap(Dynamics::Grid { spec, encoding, index, cell }, pre))
    }

    pub fn cartpole(params: CartpoleParams, pre: Preprocessing) -> Self {
        Self::wrap(Dynamics::Cartpole { params, state: [0.0; 4] }, pre)
    }

    fn wrap(dynamics: Dynamics, pre: Preprocessing) -> Self {
        let mut env = EnvInstance {
            dynamics,
            pre,
            normalizer: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
            finished: false,
        };
        if env.pre.normalize_obs {
            env.normalizer = Some(ObsNormalizer::new(env.obs_dim(), env.pre.obs_warmup));
        }
        env
    }

    pub fn obs_dim(&self) -> usize {
        match &self.dynamics {
            Dynamics::Grid { encoding: ObsEncoding::OneHot, index, .. } => index.len(),
            Dynamics::Grid { encoding: ObsEncoding::Coordinates, .. } => 2,
            Dynamics::Cartpole { .. } => 4,
        }
    }

    pub fn n_actions(&self) -> usize {
        match &self.dynamics {
            Dynamics::Grid { .. } => grid::MOVES.len(),
            Dynamics::Cartpole { .. } => 2,
        }
    }

    pub fn max_steps(&self) -> usize {
        match &self.dynamics {
            Dynamics::Grid { spec, .. } => spec.max_steps,
            Dynamics::Cartpole { params, .. } => params.max_steps,
        }
    }

    pub fn grid_spec(&self) -> Option<&GridSpec> {
        match &self.dynamics {
            Dynamics::Grid { spec, .. } => Some(spec),
            Dynamics::Cartpole { .. } => None,
        }
    }

    pub fn cell(&self) -> Option<Cell> {
        match &self.dynamics {
            Dynamics::Grid { cell, .. } => Some(*cell),
            Dynamics::Cartpole { .. } => None,
        }
    }

    pub fn cart_state(&self) -> Option<CartState> {
        match &self.dynamics {
            Dynamics::Cartpole { state, .. } => Some(*state),
            Dynamics::Grid { .. } => None,
        }
    }

    pub fn normalizer(&self) -> Option<&ObsNormalizer> {
        self.normalizer.as_ref()
    }

    pub fn set_normalizer(&mut self, n: ObsNormalizer) {
        self.normalizer = Some(n);
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// Unprocessed observation of the current state.
    pub fn raw_obs(&self) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Grid { spec, encoding, index, cell } => match encoding {
                ObsEncoding::OneHot => {
                    let mut v = vec![0.0; index.len()];
                    v[index[cell]] = 1.0;
                    v
                }
                ObsEncoding::Coordinates => vec![
                    cell.0 as f64 / (spec.height.max(2) - 1) as f64,
                    cell.1 as f64 / (spec.width.max(2) - 1) as f64,
                ],
            },
            Dynamics::Cartpole { state, .. } => state.to_vec(),
        }
    }

    fn observe(&mut self) -> Observation {
        let raw = self.raw_obs();
        match self.normalizer.as_mut() {
            Some(n) => Observation { vector: n.process(&raw), preprocessed: true },
            None => Observation {
                vector: raw.iter().map(|v| v.clamp(-preprocess::OBS_CLIP, preprocess::OBS_CLIP)).collect(),
                preprocessed: false,
            },
        }
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        self.finished = false;
        match &mut self.dynamics {
            Dynamics::Grid { spec, cell, .. } => *cell = spec.start,
            Dynamics::Cartpole { params, state } => {
                let k = params.init_noise;
                for v in state.iter_mut() {
                    *v = if k > 0.0 { self.rng.random_range(-k..k) } else { 0.0 };
                }
            }
        }
        self.observe()
    }

    /// Place a cartpole in an exact state (used by physics tests).
    pub fn reset_cartpole_to(&mut self, s: CartState) -> Result<Observation> {
        match &mut self.dynamics {
            Dynamics::Cartpole { state, .. } => *state = s,
            Dynamics::Grid { .. } => return usage("reset_cartpole_to on a grid"),
        }
        self.t = 0;
        self.finished = false;
        Ok(self.observe())
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.finished {
            return usage("step called on a finished episode; call reset first");
        }
        if action >= self.n_actions() {
            return usage(format!("action {action} out of range 0..{}", self.n_actions()));
        }
        self.t += 1;
        let (raw_reward, done, info) = match &mut self.dynamics {
            Dynamics::Grid { spec, cell, .. } => {
                *cell = spec.next_cell(*cell, action);
                match spec.terminals.get(cell) {
                    Some(t) => (t.reward, true, StepInfo { goal: Some(t.id), cell: Some(*cell) }),
                    None => (spec.step_reward, false, StepInfo { goal: None, cell: Some(*cell) }),
                }
            }
            Dynamics::Cartpole { params, state } => {
                let force = if action == 1 { params.force_mag } else { -params.force_mag };
                *state = params.integrate(*state, force);
                let collapsed = params.collapsed(state);
                (if collapsed { -1.0 } else { 0.0 }, collapsed, StepInfo::default())
            }
        };
        let truncated = !done && self.t >= self.max_steps();
        self.finished = done || truncated;
        let reward = if self.pre.clip_reward { clip_reward(raw_reward) } else { raw_reward };
        let obs = self.observe();
        Ok(StepResult { obs, reward, raw_reward, done, truncated, info })
    }

    /// Advance a cartpole under an arbitrary force, bypassing the action set.
    pub fn step_cartpole_force(&mut self, force: f64) -> Result<CartState> {
        match &mut self.dynamics {
            Dynamics::Cartpole { params, state } => {
                *state = params.integrate(*state, force);
                Ok(*state)
            }
            Dynamics::Grid { .. } => usage("step_cartpole_force on a grid"),
        }
    }
}

fn build_grid(text: &str, layout: Option<GridSpec>, check: fn(&GridSpec) -> Result<()>) -> Result<EnvInstance> {
    let spec = match layout {
        Some(s) => s,
        None => GridSpec::parse(text)?,
    };
    spec.validate()?;
    check(&spec)?;
    EnvInstance::grid(spec, ObsEncoding::OneHot, Preprocessing::default())
}

pub fn make_two_goal_maze(layout: Option<GridSpec>) -> Result<EnvInstance> {
    build_grid(grid::TWO_GOAL_LAYOUT, layout, grid::check_two_goal)
}

pub fn make_subgoal_maze() -> Result<EnvInstance> {
    build_grid(grid::SUBGOAL_LAYOUT, None, grid::check_subgoal)
}

pub fn make_red_herring_maze() -> Result<EnvInstance> {
    build_grid(grid::RED_HERRING_LAYOUT, None, grid::check_red_herring)
}

pub fn make_corridor_maze() -> Result<EnvInstance> {
    build_grid(grid::CORRIDOR_LAYOUT, None, grid::check_corridor)
}

pub fn make_sparse_cartpole(params: Option<CartpoleParams>) -> EnvInstance {
    EnvInstance::cartpole(params.unwrap_or_default(), Preprocessing::default())
}

/// Named layouts shipped with the crate.
pub fn builtin_layout(name: &str) -> Option<(&'static str, fn(&GridSpec) -> Result<()>)> {
    match name {
        "two_goal" => Some((grid::TWO_GOAL_LAYOUT, grid::check_two_goal)),
        "subgoal" => Some((grid::SUBGOAL_LAYOUT, grid::check_subgoal)),
        "red_herring" => Some((grid::RED_HERRING_LAYOUT, grid::check_red_herring)),
        "corridor" => Some((grid::CORRIDOR_LAYOUT, grid::check_corridor)),
        _ => None,
    }
}
