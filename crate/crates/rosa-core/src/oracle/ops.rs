//! Intervention and Bellman operators of the switching game, and their fixed point.

use serde::{Deserialize, Serialize};

use super::mdp::FiniteMdp;
use super::mg::{AugValue, TabularMG};
use crate::error::{Result, RosaError};

/// Shared tolerance for "strictly better" comparisons at a fixed point.
pub const TIE_TOL: f64 = 1e-9;

/// How the controller action is chosen inside an operator.
#[derive(Debug, Clone, Copy)]
pub enum CtrlChoice<'a> {
    /// Maximise over actions.
    Greedy,
    /// Average over `dist[a]`.
    Dist(&'a [f64]),
}

/// One-step backup at `(s, i)` for controller action `a` and intervention bit `d`.
fn backup(mg: &TabularMG, psi: &[[f64; 2]], v: &AugValue, s: usize, i: usize, a: usize, d: usize) -> f64 {
    let j = i ^ d;
    let mut cont = 0.0;
    for (s2, p) in mg.p[s][a].iter().enumerate() {
        cont += p * (psi[s2][j] + v.v[s2][j]);
    }
    let cost = if d == 1 { mg.c } else { 0.0 };
    mg.r[s][a] + cost + mg.bonus[s] * j as f64 - psi[s][i] + mg.gamma * cont
}

fn branch(mg: &TabularMG, psi: &[[f64; 2]], v: &AugValue, s: usize, i: usize, d: usize, ctrl: CtrlChoice) -> f64 {
    match ctrl {
        CtrlChoice::Greedy => (0..mg.n_actions)
            .map(|a| backup(mg, psi, v, s, i, a, d))
            .fold(f64::NEG_INFINITY, f64::max),
        CtrlChoice::Dist(w) => (0..mg.n_actions).map(|a| w[a] * backup(mg, psi, v, s, i, a, d)).sum(),
    }
}

fn psi_for(mg: &TabularMG, shaper: &[Vec<f64>]) -> Vec<[f64; 2]> {
    mg.mean_potential(shaper).into_iter().map(|f| [0.0, f]).collect()
}

/// Value of intervening now at `(s, I)`: shaped reward, switch cost and the
/// continuation with the register flipped.
pub fn intervention_op(
    mg: &TabularMG,
    v: &AugValue,
    s: usize,
    i: usize,
    ctrl: CtrlChoice,
    shaper: &[Vec<f64>],
) -> f64 {
    branch(mg, &psi_for(mg, shaper), v, s, i, 1, ctrl)
}

/// Value of leaving the register unchanged at `(s, I)`.
pub fn continuation_op(
    mg: &TabularMG,
    v: &AugValue,
    s: usize,
    i: usize,
    ctrl: CtrlChoice,
    shaper: &[Vec<f64>],
) -> f64 {
    branch(mg, &psi_for(mg, shaper), v, s, i, 0, ctrl)
}

/// `(intervene, continue)` branch values at every augmented state, greedy controller.
pub fn bellman_branches(mg: &TabularMG, v: &AugValue) -> Vec<[(f64, f64); 2]> {
    let psi = mg.aug_potential();
    (0..mg.n_states)
        .map(|s| {
            let at = |i| {
                (
                    branch(mg, &psi, v, s, i, 1, CtrlChoice::Greedy),
                    branch(mg, &psi, v, s, i, 0, CtrlChoice::Greedy),
                )
            };
            [at(0), at(1)]
        })
        .collect()
}

/// `T V = max(M V, N V)` pointwise.
pub fn bellman_op(mg: &TabularMG, v: &AugValue) -> AugValue {
    AugValue {
        v: bellman_branches(mg, v)
            .into_iter()
            .map(|b| [b[0].0.max(b[0].1), b[1].0.max(b[1].1)])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIteration {
    pub v: AugValue,
    pub iterations: usize,
    /// `||V_{k+1} - V_k||` per iteration.
    pub residuals: Vec<f64>,
}

/// Iterate `T` from zero until the sup-norm step drops below `tol`.
pub fn value_iterate(mg: &TabularMG, tol: f64, max_iter: usize) -> Result<ValueIteration> {
    mg.validate()?;
    let mut v = AugValue::zeros(mg.n_states);
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let next = bellman_op(mg, &v);
        let diff = next.sup_dist(&v);
        residuals.push(diff);
        v = next;
        if !v.is_finite() {
            return Err(RosaError::Numerical("value iteration produced a non-finite value".into()));
        }
        if diff < tol {
            return Ok(ValueIteration { v, iterations: it, residuals });
        }
    }
    Err(RosaError::NoConvergence { iterations: max_iter, residual: *residuals.last().unwrap_or(&f64::NAN) })
}

/// Switching decision at `(s, I)`: 1 iff intervening is strictly better than
/// continuing under `v` (ties resolve to 0).
pub fn switch_rule(mg: &TabularMG, v: &AugValue, s: usize, i: usize) -> u8 {
    let psi = mg.aug_potential();
    let m = branch(mg, &psi, v, s, i, 1, CtrlChoice::Greedy);
    let n = branch(mg, &psi, v, s, i, 0, CtrlChoice::Greedy);
    u8::from(m > n + TIE_TOL)
}

/// Deterministic augmented policy: `(a, d)` per `(s, I)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugPolicy {
    pub choice: Vec<[(usize, usize); 2]>,
}

/// Greedy policy with respect to `v`, using [`switch_rule`] for the intervention bit.
pub fn greedy_policy(mg: &TabularMG, v: &AugValue) -> AugPolicy {
    let psi = mg.aug_potential();
    let choice = (0..mg.n_states)
        .map(|s| {
            let pick = |i: usize| {
                let d = switch_rule(mg, v, s, i) as usize;
                let q: Vec<f64> = (0..mg.n_actions).map(|a| backup(mg, &psi, v, s, i, a, d)).collect();
                let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let a = (0..mg.n_actions).find(|&a| q[a] >= best - TIE_TOL).unwrap();
                (a, d)
            };
            [pick(0), pick(1)]
        })
        .collect();
    AugPolicy { choice }
}

/// `Q(s, I, a, d)` as a flat table.
pub fn q_values(mg: &TabularMG, v: &AugValue) -> Vec<f64> {
    let psi = mg.aug_potential();
    let mut q = Vec::with_capacity(mg.n_states * 4 * mg.n_actions);
    for s in 0..mg.n_states {
        for i in 0..2 {
            for a in 0..mg.n_actions {
                for d in 0..2 {
                    q.push(backup(mg, &psi, v, s, i, a, d));
                }
            }
        }
    }
    q
}

/// Flat index of `(s, I, a, d)` in [`q_values`] order.
pub fn q_index(mg: &TabularMG, s: usize, i: usize, a: usize, d: usize) -> usize {
    ((s * 2 + i) * mg.n_actions + a) * 2 + d
}

/// Which reward terms an augmented MDP carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardParts {
    /// Extrinsic reward, shaping, cost and bonus: the game's own objective.
    Full,
    /// Extrinsic reward only.
    Extrinsic,
}

/// The game as an explicit MDP over `x = 2s + I` with joint actions `u = 2a + d`.
pub fn augmented_mdp(mg: &TabularMG, parts: RewardParts) -> FiniteMdp {
    let psi = mg.aug_potential();
    let n = mg.n_states;
    let mut p = vec![vec![vec![0.0; 2 * n]; 2 * mg.n_actions]; 2 * n];
    let mut r = vec![vec![0.0; 2 * mg.n_actions]; 2 * n];
    for s in 0..n {
        for i in 0..2 {
            for a in 0..mg.n_actions {
                for d in 0..2 {
                    let (x, u, j) = (2 * s + i, 2 * a + d, i ^ d);
                    let mut shaped_next = 0.0;
                    for s2 in 0..n {
                        let pr = mg.p[s][a][s2];
                        p[x][u][2 * s2 + j] += pr;
                        shaped_next += pr * psi[s2][j];
                    }
                    r[x][u] = match parts {
                        RewardParts::Extrinsic => mg.r[s][a],
                        RewardParts::Full => {
                            let cost = if d == 1 { mg.c } else { 0.0 };
                            mg.r[s][a] + cost + mg.bonus[s] * j as f64 + mg.gamma * shaped_next - psi[s][i]
                        }
                    };
                }
            }
        }
    }
    FiniteMdp { p, r, gamma: mg.gamma }
}

/// Extrinsic value of an augmented policy at every `(s, I)`.
pub fn extrinsic_value(mg: &TabularMG, policy: &AugPolicy) -> AugValue {
    let mdp = augmented_mdp(mg, RewardParts::Extrinsic);
    let flat: Vec<usize> = policy.choice.iter().flat_map(|c| c.iter().map(|&(a, d)| 2 * a + d)).collect();
    let v = mdp.evaluate(&flat);
    AugValue { v: (0..mg.n_states).map(|s| [v[2 * s], v[2 * s + 1]]).collect() }
}

/// The plain MDP underlying the game (controller only, no shaping).
pub fn base_mdp(mg: &TabularMG) -> FiniteMdp {
    FiniteMdp { p: mg.p.clone(), r: mg.r.clone(), gamma: mg.gamma }
}

/// Pointwise best value over all deterministic augmented policies.
pub fn brute_force_values(mg: &TabularMG, max_policies: u64) -> Result<AugValue> {
    let best = augmented_mdp(mg, RewardParts::Full).brute_force(max_policies)?;
    Ok(AugValue { v: (0..mg.n_states).map(|s| [best[2 * s], best[2 * s + 1]]).collect() })
}
