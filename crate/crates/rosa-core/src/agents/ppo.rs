use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::PolicyHead;
use crate::config::PPOConfig;
use crate::error::{usage, Result, RosaError};
use crate::nn::{clip_grad_norm, log_softmax};

/// GAE over one contiguous sequence. `values` has one more entry than
/// `rewards` (the bootstrap value of the final successor).
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lam: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 || dones.len() != rewards.len() {
        return usage(format!(
            "gae needs len(values) = len(rewards) + 1 = len(dones) + 1, got {}, {}, {}",
            values.len(),
            rewards.len(),
            dones.len()
        ));
    }
    let n = rewards.len();
    let next: Vec<f64> = (0..n).map(|t| values[t + 1]).collect();
    gae_bootstrap(rewards, &values[..n], &next, dones, dones, gamma, lam)
}

/// GAE when successors are given explicitly. `terminal[t]` stops bootstrapping
/// through `next_values[t]`; `boundary[t]` (episode end, terminal or truncated)
/// stops the advantage recursion.
pub fn gae_bootstrap(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminal: &[bool],
    boundary: &[bool],
    gamma: f64,
    lam: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || terminal.len() != n || boundary.len() != n {
        return usage("gae inputs must have equal lengths");
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let nonterm = if terminal[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * nonterm * next_values[t] - values[t];
        let carry = if boundary[t] { 0.0 } else { 1.0 };
        running = delta + gamma * lam * carry * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Per-sample clipped surrogate `min(ratio A, clip(ratio, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Training samples for one head.
#[derive(Debug, Clone, Default)]
pub struct PpoBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Samples whose action was produced by this head. Others only train the value net.
    pub policy_mask: Vec<bool>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Clipped-surrogate update: `cfg.epochs` passes over `cfg.minibatches` shuffled minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    head: &mut PolicyHead,
    batch: &PpoBatch,
    cfg: &PPOConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics> {
    let n = batch.len();
    if n == 0 {
        return usage("ppo_update needs a non-empty buffer");
    }
    let lens = [batch.actions.len(), batch.old_logp.len(), batch.advantages.len(), batch.returns.len(), batch.policy_mask.len()];
    if lens.iter().any(|&l| l != n) {
        return usage("ppo batch columns have different lengths");
    }
    let mut diag = PpoDiagnostics::default();
    let mut idx: Vec<usize> = (0..n).collect();
    let n_mb = cfg.minibatches.min(n);
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for mb in 0..n_mb {
            let lo = mb * n / n_mb;
            let hi = (mb + 1) * n / n_mb;
            let chunk = &idx[lo..hi];
            let d = minibatch_step(head, batch, chunk, cfg)?;
            diag.policy_loss += d.policy_loss;
            diag.value_loss += d.value_loss;
            diag.entropy += d.entropy;
            diag.clip_fraction += d.clip_fraction;
            diag.approx_kl += d.approx_kl;
            diag.grad_norm += d.grad_norm;
            diag.minibatches += 1;
        }
    }
    let k = diag.minibatches.max(1) as f64;
    diag.policy_loss /= k;
    diag.value_loss /= k;
    diag.entropy /= k;
    diag.clip_fraction /= k;
    diag.approx_kl /= k;
    diag.grad_norm /= k;
    Ok(diag)
}

fn minibatch_step(head: &mut PolicyHead, batch: &PpoBatch, chunk: &[usize], cfg: &PPOConfig) -> Result<PpoDiagnostics> {
    let active: Vec<usize> = chunk.iter().copied().filter(|&i| batch.policy_mask[i]).collect();
    let (mean, std) = if cfg.normalize_advantages && active.len() > 1 {
        let m = active.iter().map(|&i| batch.advantages[i]).sum::<f64>() / active.len() as f64;
        let v = active.iter().map(|&i| (batch.advantages[i] - m).powi(2)).sum::<f64>() / active.len() as f64;
        (m, v.sqrt() + 1e-8)
    } else {
        (0.0, 1.0)
    };
    let mut g_pi = head.net.zero_grads();
    let mut g_v = head.value_net.zero_grads();
    let mut d = PpoDiagnostics::default();
    let n_pi = active.len().max(1) as f64;
    let n_v = chunk.len() as f64;
    for &i in &active {
        let s = &batch.obs[i];
        let trace = head.net.forward_trace(s);
        let lp = log_softmax(trace.output());
        let a = batch.actions[i];
        let adv = (batch.advantages[i] - mean) / std;
        let ratio = (lp[a] - batch.old_logp[i]).exp();
        let surr = clipped_surrogate(ratio, adv, cfg.clip_eps);
        d.policy_loss -= surr / n_pi;
        let clipped = (ratio - 1.0).abs() > cfg.clip_eps;
        if clipped {
            d.clip_fraction += 1.0 / n_pi;
        }
        d.approx_kl += (batch.old_logp[i] - lp[a]) / n_pi;
        // the unclipped term is the active one of the min unless clipping binds
        let coef = if ratio * adv <= ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv { -ratio * adv } else { 0.0 };
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let entropy: f64 = -p.iter().zip(&lp).map(|(pi, l)| pi * l).sum::<f64>();
        d.entropy += entropy / n_pi;
        let mut dlogits = vec![0.0; p.len()];
        for j in 0..p.len() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            // d(-ratio A)/d logit_j = -ratio A (1[j=a] - p_j)
            dlogits[j] += coef * (onehot - p[j]);
            // d(-ent_coef H)/d logit_j = ent_coef p_j (log p_j + H)
            dlogits[j] += cfg.ent_coef * p[j] * (lp[j] + entropy);
            dlogits[j] /= n_pi;
        }
        head.net.backward(&trace, &dlogits, &mut g_pi);
    }
    for &i in chunk {
        let s = &batch.obs[i];
        let trace = head.value_net.forward_trace(s);
        let err = trace.output()[0] - batch.returns[i];
        d.value_loss += err * err / n_v;
        head.value_net.backward(&trace, &[cfg.vf_coef * 2.0 * err / n_v], &mut g_v);
    }
    if g_pi.any_nan() || g_v.any_nan() {
        return Err(RosaError::Numerical(format!("NaN gradient in the {} head", head.role.name())));
    }
    d.grad_norm = clip_grad_norm(&mut [&mut g_pi, &mut g_v], cfg.grad_norm_clip);
    if !active.is_empty() {
        head.opt_pi.step(&mut head.net, &g_pi);
    }
    head.opt_v.step(&mut head.value_net, &g_v);
    if head.net.any_nan() || head.value_net.any_nan() {
        return Err(RosaError::Numerical(format!("non-finite parameters in the {} head", head.role.name())));
    }
    Ok(d)
}
