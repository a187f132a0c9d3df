use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use super::policy::{HeadRole, PolicyHead};
use super::ppo::{gae_bootstrap, ppo_update, PpoBatch, PpoDiagnostics};
use super::rollout::{
    collect_rollout, controller_reward, shaper_step_reward, Agents, BonusSource, MetricsRow, RolloutConfig,
    RolloutState, TransitionRecord,
};
use crate::config::{Mode, NoveltyKind, PbrsConfig, RunConfig};
use crate::env::{Cell, EnvInstance, GridSpec, RunningScalar};
use crate::error::{Result, RosaError};
use crate::novelty::{CountTable, NoveltyModel};
use crate::shaping::PotentialNet;

/// Hooks called while a run progresses.
pub trait RunObserver {
    fn on_step(&mut self, _rec: &TransitionRecord) -> Result<()> {
        Ok(())
    }
    fn on_episode(&mut self, _row: &MetricsRow) -> Result<()> {
        Ok(())
    }
    fn on_update(&mut self, _diag: &UpdateDiagnostics, _agents: &Agents) -> Result<()> {
        Ok(())
    }
    /// Called with the last consistent parameters before a fault aborts the run.
    fn on_fault(&mut self, _agents: &Agents, _err: &RosaError) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl RunObserver for NullObserver {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub update: usize,
    pub env_steps: u64,
    pub controller: PpoDiagnostics,
    pub switch: Option<PpoDiagnostics>,
    pub magnitude: Option<PpoDiagnostics>,
    pub rnd_loss: Option<f64>,
    /// Fraction of buffer steps with the switch on.
    pub switch_rate: f64,
}

/// Test and ablation hooks that bypass parts of the learned system.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub switch_override: Option<u8>,
    pub bonus_override: Option<BonusSource>,
    /// Stop after the first update that ends past this wall-clock budget.
    pub wall_budget: Option<Duration>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Agents,
    pub episodes: Vec<MetricsRow>,
    pub env_steps: u64,
    pub updates: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Fixed potential over grid cells for the `pbrs_fixed` baseline.
pub fn pbrs_potential(spec: &GridSpec, cfg: &PbrsConfig) -> Result<BTreeMap<Cell, f64>> {
    if cfg.potential == "bfs" {
        let best = spec
            .terminals
            .values()
            .max_by(|a, b| a.reward.total_cmp(&b.reward).then(b.id.cmp(&a.id)))
            .ok_or_else(|| RosaError::Construction("pbrs needs a terminal".into()))?;
        let dist = spec.goal_distance(&[best.id]);
        let far = dist.values().copied().max().unwrap_or(1).max(1) as f64;
        let scale = cfg.scale.unwrap_or(1.0 / far);
        return Ok(dist.into_iter().map(|(c, d)| (c, -scale * d as f64)).collect());
    }
    let text = std::fs::read_to_string(&cfg.potential)
        .map_err(|e| RosaError::Construction(format!("potential table {}: {e}", cfg.potential)))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| RosaError::Parse(format!("potential table: {e}")))?;
    if rows.len() != spec.height || rows.iter().any(|r| r.len() != spec.width) {
        return Err(RosaError::Construction(format!(
            "potential table must be {}x{} to match the layout",
            spec.height, spec.width
        )));
    }
    let scale = cfg.scale.unwrap_or(1.0);
    Ok(spec.free_cells().into_iter().map(|(r, c)| ((r, c), scale * rows[r][c])).collect())
}

/// Build every learner required by `cfg.mode` for `env`.
pub fn build_agents(cfg: &RunConfig, env: &EnvInstance, seed: u64) -> Result<Agents> {
    let mut rng = stream(seed, 1);
    let obs_dim = env.obs_dim();
    let controller = PolicyHead::new(HeadRole::Controller, obs_dim, env.n_actions(), &cfg.ppo.hidden, cfg.ppo.lr, &mut rng)?;
    let shaper = &cfg.shaper;
    let switch = if cfg.mode == Mode::Rosa {
        Some(PolicyHead::new(HeadRole::Switch, obs_dim, 2, &cfg.ppo.hidden, shaper.lr, &mut rng)?)
    } else {
        None
    };
    let (magnitude, potential) = if cfg.mode.has_shaper() {
        let head = PolicyHead::new(HeadRole::Magnitude, obs_dim, shaper.m, &cfg.ppo.hidden, shaper.lr, &mut rng)?;
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(&shaper.potential_hidden);
        dims.push(shaper.m);
        (Some(head), Some(PotentialNet::new(&dims, seed ^ 0x9e37_79b9_7f4a_7c15)?))
    } else {
        (None, None)
    };
    let bonus = if cfg.mode.uses_novelty() {
        Some(match cfg.novelty.kind {
            NoveltyKind::Rnd => {
                let mut dims = vec![obs_dim];
                dims.extend_from_slice(&cfg.novelty.hidden);
                dims.push(cfg.novelty.k);
                BonusSource::Rnd(NoveltyModel::new(&dims, seed ^ 0xc2b2_ae3d_27d4_eb4f, cfg.novelty.lr)?)
            }
            NoveltyKind::Count => {
                if env.grid_spec().is_none() {
                    return Err(RosaError::Construction("count bonuses need a grid environment".into()));
                }
                BonusSource::Count(CountTable::new(cfg.novelty.beta, cfg.novelty.cap))
            }
        })
    } else {
        None
    };
    let pbrs = match (cfg.mode, &cfg.pbrs) {
        (Mode::PbrsFixed, Some(p)) => {
            let spec = env.grid_spec().ok_or_else(|| RosaError::Construction("pbrs_fixed needs a grid".into()))?;
            Some(pbrs_potential(spec, p)?)
        }
        (Mode::PbrsFixed, None) => return Err(RosaError::Construction("mode pbrs_fixed needs a [pbrs] section".into())),
        _ => None,
    };
    Ok(Agents { controller, switch, magnitude, potential, bonus, pbrs, bonus_stats: RunningScalar::default() })
}

pub fn rollout_config(cfg: &RunConfig, switch_override: Option<u8>) -> RolloutConfig {
    RolloutConfig {
        mode: cfg.mode,
        gamma: cfg.ppo.gamma,
        rollout_len: cfg.ppo.rollout_len,
        switching: cfg.shaper.switching,
        switch_cost: cfg.shaper.switch_cost,
        termination_prob: cfg.shaper.termination_prob,
        direction: cfg.shaper.direction,
        ext_coef: cfg.ppo.ext_coef,
        int_coef: cfg.ppo.int_coef,
        bonus_coef: cfg.shaper.bonus_coef,
        normalize_bonus: cfg.novelty.normalize,
        assembly: cfg.shaper.assembly,
        switch_override,
    }
}

/// Train one seed of `cfg`.
pub fn train(cfg: &RunConfig, seed: u64, observer: &mut dyn RunObserver) -> Result<TrainOutcome> {
    train_with(cfg, seed, TrainOptions::default(), observer)
}

pub fn train_with(
    cfg: &RunConfig,
    seed: u64,
    opts: TrainOptions,
    observer: &mut dyn RunObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = cfg.env.build()?;
    let mut agents = build_agents(cfg, &env, seed)?;
    if let Some(b) = opts.bonus_override {
        agents.bonus = Some(b);
    }
    let mut rcfg = rollout_config(cfg, opts.switch_override);
    let mut states: Vec<RolloutState> =
        (0..cfg.ppo.num_envs).map(|e| RolloutState::new(env.clone(), stream(seed, 100 + e as u64))).collect();
    let mut act_rng = stream(seed, 2);
    let mut upd_rng = stream(seed, 3);
    let start = Instant::now();
    let mut episodes = Vec::new();
    let mut total = 0u64;
    let mut updates = 0usize;
    while total < cfg.total_steps {
        let remaining = cfg.total_steps - total;
        let per_env = remaining.div_ceil(cfg.ppo.num_envs as u64);
        rcfg.rollout_len = cfg.ppo.rollout_len.min(per_env as usize);
        let mut chunks = Vec::with_capacity(states.len());
        let mut new_rows = Vec::new();
        for st in states.iter_mut() {
            st.env_steps = total;
            let mut rows = Vec::new();
            let recs = collect_rollout(st, &agents, &rcfg, &mut act_rng, &mut rows).inspect_err(|e| observer.on_fault(&agents, e))?;
            total = st.env_steps;
            new_rows.extend(rows);
            chunks.push(recs);
        }
        for chunk in &chunks {
            for rec in chunk {
                observer.on_step(rec)?;
            }
        }
        for mut row in new_rows {
            row.episode = episodes.len() as u64;
            row.wall_ms = start.elapsed().as_millis() as u64;
            observer.on_episode(&row)?;
            episodes.push(row);
        }
        let grid_width = env.grid_spec().map(|s| s.width);
        let mut diag = match update_agents(&mut agents, &chunks, cfg, &rcfg, grid_width, &mut upd_rng) {
            Ok(d) => d,
            Err(e) => {
                observer.on_fault(&agents, &e);
                return Err(e);
            }
        };
        diag.update = updates;
        diag.env_steps = total;
        observer.on_update(&diag, &agents)?;
        updates += 1;
        if opts.wall_budget.is_some_and(|b| start.elapsed() >= b) {
            break;
        }
    }
    Ok(TrainOutcome { agents, episodes, env_steps: total, updates })
}

fn head_batch(
    head: &PolicyHead,
    chunks: &[Vec<TransitionRecord>],
    rewards: &[Vec<f64>],
    gamma: f64,
    lam: f64,
    pick: impl Fn(&TransitionRecord) -> Option<(usize, f64)>,
) -> Result<PpoBatch> {
    let mut batch = PpoBatch::default();
    for (chunk, rew) in chunks.iter().zip(rewards) {
        let values: Vec<f64> = chunk.iter().map(|r| head.value(&r.s)).collect();
        let next: Vec<f64> = chunk.iter().map(|r| head.value(&r.s_next)).collect();
        let terminal: Vec<bool> = chunk.iter().map(|r| r.done).collect();
        let n = chunk.len();
        let boundary: Vec<bool> = chunk.iter().enumerate().map(|(i, r)| r.episode_end() || i + 1 == n).collect();
        let adv = gae_bootstrap(rew, &values, &next, &terminal, &boundary, gamma, lam)?;
        for (i, rec) in chunk.iter().enumerate() {
            let (action, logp, mask) = match pick(rec) {
                Some((a, lp)) => (a, lp, true),
                None => (0, 0.0, false),
            };
            batch.obs.push(rec.s.clone());
            batch.actions.push(action);
            batch.old_logp.push(logp);
            batch.advantages.push(adv[i]);
            batch.returns.push(adv[i] + values[i]);
            batch.policy_mask.push(mask);
        }
    }
    Ok(batch)
}

/// One learning phase: novelty model, switching policy, magnitude policy, controller.
pub fn update_agents(
    agents: &mut Agents,
    chunks: &[Vec<TransitionRecord>],
    cfg: &RunConfig,
    rcfg: &RolloutConfig,
    grid_width: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateDiagnostics> {
    let mut diag = UpdateDiagnostics::default();
    let n: usize = chunks.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(RosaError::Usage("empty rollout buffer".into()));
    }
    diag.switch_rate = chunks.iter().flatten().filter(|r| r.g == 1).count() as f64 / n as f64;

    for rec in chunks.iter().flatten() {
        agents.bonus_stats.update(rec.bonus);
    }
    match agents.bonus.as_mut() {
        Some(BonusSource::Rnd(model)) => {
            let mut states: Vec<&Vec<f64>> = chunks.iter().flatten().map(|r| &r.s).collect();
            let n_mb = cfg.ppo.minibatches.min(states.len());
            let mut loss = 0.0;
            let mut steps = 0;
            for _ in 0..cfg.ppo.epochs {
                states.shuffle(rng);
                for mb in 0..n_mb {
                    let lo = mb * states.len() / n_mb;
                    let hi = (mb + 1) * states.len() / n_mb;
                    let batch: Vec<Vec<f64>> = states[lo..hi].iter().map(|s| (*s).clone()).collect();
                    loss += model.train_predictor(&batch, cfg.novelty.lr)?;
                    steps += 1;
                }
            }
            diag.rnd_loss = Some(loss / steps.max(1) as f64);
        }
        Some(BonusSource::Count(table)) => {
            let w = grid_width.ok_or_else(|| RosaError::Usage("count bonus needs a grid".into()))?;
            for rec in chunks.iter().flatten() {
                if let Some((r, c)) = rec.cell {
                    table.visit((r * w + c) as u64);
                }
            }
        }
        _ => {}
    }

    let gamma = cfg.ppo.gamma;
    let lam = cfg.ppo.lam;
    if cfg.mode.has_shaper() {
        let shaper_rewards: Vec<Vec<f64>> = chunks
            .iter()
            .map(|c| {
                c.iter()
                    .map(|r| {
                        let l = rcfg.bonus_coef * agents.scaled_bonus(r.bonus, rcfg.normalize_bonus);
                        shaper_step_reward(r, l, rcfg.assembly)
                    })
                    .collect()
            })
            .collect();
        if let Some(head) = agents.switch.as_mut() {
            let batch = head_batch(head, chunks, &shaper_rewards, gamma, lam, |r| r.logp_g.map(|lp| (r.g as usize, lp)))?;
            diag.switch = Some(ppo_update(head, &batch, &cfg.ppo, rng)?);
        }
        if let Some(head) = agents.magnitude.as_mut() {
            let batch =
                head_batch(head, chunks, &shaper_rewards, gamma, lam, |r| r.logp_a2.map(|lp| (r.a2.saturating_sub(1), lp)))?;
            diag.magnitude = Some(ppo_update(head, &batch, &cfg.ppo, rng)?);
        }
    }

    let ctrl_rewards: Vec<Vec<f64>> =
        chunks.iter().map(|c| c.iter().map(|r| controller_reward(r, agents, rcfg)).collect()).collect();
    let batch = head_batch(&agents.controller, chunks, &ctrl_rewards, gamma, lam, |r| Some((r.a, r.logp_a)))?;
    diag.controller = ppo_update(&mut agents.controller, &batch, &cfg.ppo, rng)?;
    Ok(diag)
}
