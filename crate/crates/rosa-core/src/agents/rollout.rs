use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::policy::{act, PolicyHead};
use crate::config::{Mode, RewardAssembly, SwitchingMode};
use crate::env::{Cell, EnvInstance, RunningScalar};
use crate::error::{Result, RosaError};
use crate::novelty::{CountTable, NoveltyModel};
use crate::shaping::{shaping_reward_with, Direction, PotentialNet, ShaperAction};

/// Where the shaper's bonus `L(s)` comes from.
#[derive(Debug, Clone)]
pub enum BonusSource {
    Rnd(NoveltyModel),
    /// Visit counts keyed by grid cell.
    Count(CountTable),
    /// Fixed sequence indexed by the global step counter (for tests).
    Scripted(Vec<f64>),
}

/// Everything with parameters, snapshot-read during collection.
#[derive(Debug, Clone)]
pub struct Agents {
    pub controller: PolicyHead,
    pub switch: Option<PolicyHead>,
    pub magnitude: Option<PolicyHead>,
    pub potential: Option<PotentialNet>,
    pub bonus: Option<BonusSource>,
    /// Fixed potential over grid cells for the hand-crafted baseline.
    pub pbrs: Option<BTreeMap<Cell, f64>>,
    /// Running scale of raw bonuses.
    pub bonus_stats: RunningScalar,
}

/// One environment step with every term the three heads need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode: u64,
    pub t: usize,
    pub env_step: u64,
    pub s: Vec<f64>,
    pub a: usize,
    pub g: u8,
    pub a2: ShaperAction,
    /// Magnitude action drawn at the successor for the shaping term.
    pub a2_next: ShaperAction,
    /// Extrinsic reward.
    pub r: f64,
    /// Shaping reward (zero when the switch is off).
    pub r_i: f64,
    /// Raw novelty bonus of `s`.
    pub bonus: f64,
    /// Switch cost, non-zero only on switch-on events.
    pub c: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
    pub logp_a: f64,
    /// Present when the switching policy produced `g`.
    pub logp_g: Option<f64>,
    /// Present when the magnitude policy produced `a2`.
    pub logp_a2: Option<f64>,
    pub cell: Option<Cell>,
    pub next_cell: Option<Cell>,
    pub goal: Option<u8>,
}

impl TransitionRecord {
    pub fn episode_end(&self) -> bool {
        self.done || self.truncated
    }
}

/// Per-episode summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: u64,
    pub env_steps: u64,
    pub extrinsic_return: f64,
    pub shaped_return: f64,
    pub switch_count: u64,
    pub mean_bonus: f64,
    pub goal_id: Option<u8>,
    pub wall_ms: u64,
}

/// Fixed settings of the collection loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub mode: Mode,
    pub gamma: f64,
    pub rollout_len: usize,
    pub switching: SwitchingMode,
    pub switch_cost: f64,
    pub termination_prob: f64,
    pub direction: Direction,
    pub ext_coef: f64,
    pub int_coef: f64,
    pub bonus_coef: f64,
    pub normalize_bonus: bool,
    pub assembly: RewardAssembly,
    /// Force the switching decision (tests and ablations).
    pub switch_override: Option<u8>,
}

/// Environment plus the carried episode state between rollouts.
#[derive(Debug, Clone)]
pub struct RolloutState {
    pub env: EnvInstance,
    obs: Vec<f64>,
    prev_bonus: f64,
    register: bool,
    pub episode: u64,
    pub t: usize,
    pub env_steps: u64,
    reset_rng: ChaCha8Rng,
    acc: EpisodeAcc,
    /// Shaper decision already drawn for the current observation.
    pending: Option<ShaperDecision>,
}

/// The shaper's choices at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaperDecision {
    pub g: u8,
    pub logp_g: Option<f64>,
    pub a2: ShaperAction,
    pub logp_a2: Option<f64>,
}

impl ShaperDecision {
    const OFF: ShaperDecision = ShaperDecision { g: 0, logp_g: None, a2: 0, logp_a2: None };
}

#[derive(Debug, Clone, Default)]
struct EpisodeAcc {
    ext: f64,
    shaped: f64,
    switches: u64,
    bonus: f64,
    steps: u64,
}

impl RolloutState {
    pub fn new(mut env: EnvInstance, mut reset_rng: ChaCha8Rng) -> Self {
        let obs = env.reset(reset_rng.next_u64()).vector;
        RolloutState {
            env,
            obs,
            prev_bonus: 0.0,
            register: false,
            episode: 0,
            t: 0,
            env_steps: 0,
            reset_rng,
            acc: EpisodeAcc::default(),
            pending: None,
        }
    }

    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    fn state_key(&self) -> Result<u64> {
        let spec = self.env.grid_spec().ok_or_else(|| RosaError::Usage("count bonus needs a grid".into()))?;
        let (r, c) = self.env.cell().unwrap();
        Ok((r * spec.width + c) as u64)
    }
}

impl Agents {
    /// Raw `L(s)` where `s` is the environment's current observation and
    /// `index` its position in the global step sequence.
    fn raw_bonus_at(&self, st: &RolloutState, s: &[f64], index: u64) -> Result<f64> {
        Ok(match &self.bonus {
            None => 0.0,
            Some(BonusSource::Rnd(m)) => m.bonus(s),
            Some(BonusSource::Count(t)) => t.count_bonus(st.state_key()?),
            Some(BonusSource::Scripted(v)) => v.get(index as usize).copied().unwrap_or(0.0),
        })
    }

    /// Bonus after optional scaling by its running standard deviation.
    pub fn scaled_bonus(&self, raw: f64, normalize: bool) -> f64 {
        if normalize && self.bonus_stats.count > 1.0 {
            raw / self.bonus_stats.std()
        } else {
            raw
        }
    }

    fn magnitude_sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<Option<(ShaperAction, f64)>> {
        match &self.magnitude {
            Some(h) => {
                let (k, lp) = act(h, s, rng)?;
                Ok(Some((k + 1, lp)))
            }
            None => Ok(None),
        }
    }
}

/// Draw the switching decision and, when on, the magnitude action at `s`.
/// `bonus` and `prev_bonus` are the raw bonuses of `s` and its predecessor;
/// `prev_on` is the switch register before `s`.
fn decide<R: Rng + ?Sized>(
    agents: &Agents,
    cfg: &RolloutConfig,
    s: &[f64],
    bonus: f64,
    prev_bonus: f64,
    prev_on: bool,
    rng: &mut R,
) -> Result<ShaperDecision> {
    let (g, logp_g) = match cfg.mode {
        Mode::Vanilla | Mode::RndBonus => (0u8, None),
        Mode::PbrsFixed | Mode::RosaNoSwitch => (1u8, None),
        Mode::Rosa => match cfg.switch_override {
            Some(v) => (v.min(1), None),
            None => {
                if cfg.switching == SwitchingMode::Option && prev_on {
                    // keep shaping while the Bernoulli draw succeeds and novelty rises
                    let w = if rng.random::<f64>() < cfg.termination_prob { 1.0 } else { 0.0 };
                    (u8::from(w * (bonus - prev_bonus) > 0.0), None)
                } else {
                    let head = agents
                        .switch
                        .as_ref()
                        .ok_or_else(|| RosaError::Usage("rosa mode needs a switch head".into()))?;
                    let (g, lp) = act(head, s, rng)?;
                    (g as u8, Some(lp))
                }
            }
        },
    };
    if g == 1 && cfg.mode.has_shaper() {
        if let Some((a2, lp)) = agents.magnitude_sample(s, rng)? {
            return Ok(ShaperDecision { g, logp_g, a2, logp_a2: Some(lp) });
        }
    }
    Ok(ShaperDecision { g, logp_g, a2: 0, logp_a2: None })
}

/// Reward the controller learns from.
pub fn controller_reward(rec: &TransitionRecord, agents: &Agents, cfg: &RolloutConfig) -> f64 {
    let ext = cfg.ext_coef * rec.r;
    match cfg.mode {
        Mode::Vanilla => ext,
        Mode::RndBonus => ext + cfg.int_coef * agents.scaled_bonus(rec.bonus, cfg.normalize_bonus),
        Mode::Rosa | Mode::RosaNoSwitch | Mode::PbrsFixed => {
            if rec.g == 1 {
                ext + cfg.int_coef * rec.r_i
            } else {
                ext
            }
        }
    }
}

/// The shaper's reward `r + r_i g + c + L` (hatted) or `r + c + L` (reduced),
/// with `L` already scaled.
pub fn shaper_step_reward(rec: &TransitionRecord, bonus: f64, assembly: RewardAssembly) -> f64 {
    let shaping = match assembly {
        RewardAssembly::Hatted => rec.r_i * f64::from(rec.g),
        RewardAssembly::Reduced => 0.0,
    };
    rec.r + shaping + rec.c + bonus
}

/// Collect `cfg.rollout_len` steps, continuing the episode carried in `st`.
/// Finished episodes are appended to `episodes`.
pub fn collect_rollout<R: Rng + ?Sized>(
    st: &mut RolloutState,
    agents: &Agents,
    cfg: &RolloutConfig,
    rng: &mut R,
    episodes: &mut Vec<MetricsRow>,
) -> Result<Vec<TransitionRecord>> {
    let mut out = Vec::with_capacity(cfg.rollout_len);
    for _ in 0..cfg.rollout_len {
        let rec = rollout_step(st, agents, cfg, rng, episodes)?;
        out.push(rec);
    }
    Ok(out)
}

fn rollout_step<R: Rng + ?Sized>(
    st: &mut RolloutState,
    agents: &Agents,
    cfg: &RolloutConfig,
    rng: &mut R,
    episodes: &mut Vec<MetricsRow>,
) -> Result<TransitionRecord> {
    let s = st.obs.clone();
    let cell = st.env.cell();
    let (a, logp_a) = act(&agents.controller, &s, rng)?;
    let bonus = agents.raw_bonus_at(st, &s, st.env_steps)?;
    let prev_on = st.register;

    let dec = match st.pending.take() {
        Some(d) => d,
        None => decide(agents, cfg, &s, bonus, st.prev_bonus, prev_on, rng)?,
    };
    let ShaperDecision { g, logp_g, a2, logp_a2 } = dec;

    let res = st.env.step(a)?;
    let s_next = res.obs.vector.clone();
    let next_cell = res.info.cell;

    // the next decision is drawn now so the shaping term uses the actual next
    // shaper action and telescopes along the trajectory
    let next_dec = if res.done {
        ShaperDecision::OFF
    } else {
        let next_bonus = agents.raw_bonus_at(st, &s_next, st.env_steps + 1)?;
        decide(agents, cfg, &s_next, next_bonus, bonus, g == 1, rng)?
    };
    let a2_next = next_dec.a2;
    let r_i = if g == 1 {
        match cfg.mode {
            Mode::Rosa | Mode::RosaNoSwitch => {
                let net = agents
                    .potential
                    .as_ref()
                    .ok_or_else(|| RosaError::Usage("shaping modes need a potential net".into()))?;
                let succ = if res.done { None } else { Some(s_next.as_slice()) };
                // the step before a switch-on carries the null action, so the
                // segment's entry potential is the null one
                let a2_here = if prev_on { a2 } else { 0 };
                shaping_reward_with(net, &s, a2_here, succ, a2_next, cfg.gamma, cfg.direction)?
            }
            Mode::PbrsFixed => {
                let table = agents.pbrs.as_ref().ok_or_else(|| RosaError::Usage("pbrs_fixed needs a potential table".into()))?;
                let here = if prev_on { cell.and_then(|c| table.get(&c).copied()).unwrap_or(0.0) } else { 0.0 };
                let next = if res.done { 0.0 } else { next_cell.and_then(|c| table.get(&c).copied()).unwrap_or(0.0) };
                cfg.gamma * next - here
            }
            _ => 0.0,
        }
    } else {
        0.0
    };

    let c = if g == 1 && !prev_on && cfg.mode.has_shaper() { cfg.switch_cost } else { 0.0 };
    st.register = g == 1;
    st.prev_bonus = bonus;
    st.env_steps += 1;

    let rec = TransitionRecord {
        episode: st.episode,
        t: st.t,
        env_step: st.env_steps,
        s,
        a,
        g,
        a2,
        a2_next,
        r: res.reward,
        r_i,
        bonus,
        c,
        s_next,
        done: res.done,
        truncated: res.truncated,
        logp_a,
        logp_g,
        logp_a2,
        cell,
        next_cell,
        goal: res.info.goal,
    };

    st.acc.ext += rec.r;
    st.acc.shaped += controller_reward(&rec, agents, cfg);
    st.acc.switches += u64::from(c != 0.0);
    st.acc.bonus += bonus;
    st.acc.steps += 1;
    st.t += 1;

    if res.done || res.truncated {
        let acc = std::mem::take(&mut st.acc);
        episodes.push(MetricsRow {
            episode: st.episode,
            env_steps: st.env_steps,
            extrinsic_return: acc.ext,
            shaped_return: acc.shaped,
            switch_count: acc.switches,
            mean_bonus: acc.bonus / acc.steps.max(1) as f64,
            goal_id: res.info.goal,
            wall_ms: 0,
        });
        st.episode += 1;
        st.t = 0;
        st.register = false;
        st.prev_bonus = 0.0;
        st.pending = None;
        st.obs = st.env.reset(st.reset_rng.next_u64()).vector;
    } else {
        st.pending = Some(next_dec);
        st.obs = res.obs.vector;
    }
    Ok(rec)
}
