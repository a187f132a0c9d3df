//! Sample-based solvers for the switching game: tabular Q-learning over the
//! augmented action `(a, d)` and its linear-basis counterpart.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mg::TabularMG;
use super::ops::{q_index, q_values, value_iterate};
use crate::error::{usage, Result, RosaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlphaSchedule {
    Constant { alpha: f64 },
    /// `1 / (1 + t / scale)`.
    Harmonic { scale: f64 },
}

impl AlphaSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha } => alpha,
            AlphaSchedule::Harmonic { scale } => 1.0 / (1.0 + t as f64 / scale),
        }
    }
}

/// `Q*(s, I, a, d)` in [`q_index`] order.
pub fn q_star(mg: &TabularMG) -> Result<Vec<f64>> {
    let vi = value_iterate(mg, 1e-12, 1_000_000)?;
    Ok(q_values(mg, &vi.v))
}

/// Reduce a full table to the `(s, I, a)` view by maximising over `d`.
pub fn max_over_switch(mg: &TabularMG, q: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(q.len() / 2);
    for s in 0..mg.n_states {
        for i in 0..2 {
            for a in 0..mg.n_actions {
                out.push(q[q_index(mg, s, i, a, 0)].max(q[q_index(mg, s, i, a, 1)]));
            }
        }
    }
    out
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn value_bound(mg: &TabularMG) -> f64 {
    let l = mg.bonus.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    (mg.max_abs_reward() + mg.c.abs() + l) / (1.0 - mg.gamma) + 2.0 * mg.max_abs_phi() + 1.0
}

/// A simulator for the augmented chain under a uniform behaviour policy.
struct Sampler<'a> {
    mg: &'a TabularMG,
    psi: Vec<[f64; 2]>,
    s: usize,
    i: usize,
}

struct Sample {
    row: usize,
    reward: f64,
    s_next: usize,
    i_next: usize,
}

impl<'a> Sampler<'a> {
    fn new(mg: &'a TabularMG) -> Self {
        Sampler { mg, psi: mg.aug_potential(), s: 0, i: 0 }
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Sample {
        let mg = self.mg;
        let (s, i) = (self.s, self.i);
        let a = rng.random_range(0..mg.n_actions);
        let d = rng.random_range(0..2);
        let j = i ^ d;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut s2 = mg.n_states - 1;
        for (k, p) in mg.p[s][a].iter().enumerate() {
            acc += p;
            if u < acc {
                s2 = k;
                break;
            }
        }
        let cost = if d == 1 { mg.c } else { 0.0 };
        let reward = mg.r[s][a] + cost + mg.bonus[s] * j as f64 + mg.gamma * self.psi[s2][j] - self.psi[s][i];
        self.s = s2;
        self.i = j;
        Sample { row: q_index(mg, s, i, a, d), reward, s_next: s2, i_next: j }
    }
}

fn max_next(mg: &TabularMG, q: impl Fn(usize) -> f64, s: usize, i: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in 0..mg.n_actions {
        for d in 0..2 {
            best = best.max(q(q_index(mg, s, i, a, d)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearning {
    /// Full table over `(s, I, a, d)`.
    pub q: Vec<f64>,
    /// `(s, I, a)` view.
    pub q_sia: Vec<f64>,
    pub visits: Vec<u64>,
}

/// Tabular Q-learning on the augmented chain with a uniform behaviour policy.
pub fn q_learning_switch<R: Rng + ?Sized>(
    mg: &TabularMG,
    steps: u64,
    schedule: AlphaSchedule,
    rng: &mut R,
) -> Result<QLearning> {
    mg.validate()?;
    let rows = mg.n_states * 4 * mg.n_actions;
    let mut q = vec![0.0; rows];
    let mut visits = vec![0u64; rows];
    let bound = 10.0 * value_bound(mg);
    let mut sampler = Sampler::new(mg);
    for t in 0..steps {
        let smp = sampler.step(rng);
        let target = smp.reward + mg.gamma * max_next(mg, |k| q[k], smp.s_next, smp.i_next);
        let alpha = schedule.at(t);
        q[smp.row] += alpha * (target - q[smp.row]);
        visits[smp.row] += 1;
        if !q[smp.row].is_finite() || q[smp.row].abs() > bound {
            return Err(RosaError::Numerical(format!("Q-learning diverged at step {t}: |Q| = {}", q[smp.row].abs())));
        }
    }
    let q_sia = max_over_switch(mg, &q);
    Ok(QLearning { q, q_sia, visits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFa {
    pub weights: Vec<f64>,
    /// `Psi r` over all `(s, I, a, d)` rows.
    pub fitted: Vec<f64>,
    pub q_star: Vec<f64>,
    /// Empirical sampling distribution over rows.
    pub visitation: Vec<f64>,
    /// `||Psi r - Q*||_D`.
    pub error: f64,
    /// `||Pi Q* - Q*||_D` with `Pi` the D-weighted projection onto span(Psi).
    pub projection_error: f64,
    /// `(1 - gamma^2)^(-1/2) * projection_error`.
    pub bound: f64,
}

/// Semi-gradient Q-learning with a fixed linear basis (rows of `basis` index `(s, I, a, d)`).
/// The step size is divided by the largest squared feature norm, which makes
/// the fitted values invariant to rescaling the basis.
pub fn linear_fa_q<R: Rng + ?Sized>(
    mg: &TabularMG,
    basis: &[Vec<f64>],
    steps: u64,
    schedule: AlphaSchedule,
    rng: &mut R,
) -> Result<LinearFa> {
    mg.validate()?;
    let rows = mg.n_states * 4 * mg.n_actions;
    if basis.len() != rows {
        return usage(format!("basis has {} rows, the game has {rows} state-action pairs", basis.len()));
    }
    let p = basis[0].len();
    if p == 0 || basis.iter().any(|r| r.len() != p) {
        return usage("basis rows must share a non-zero width");
    }
    let psi = DMatrix::from_fn(rows, p, |i, j| basis[i][j]);
    let rank = psi.clone().svd(false, false).rank(1e-10);
    if rank < p {
        return usage(format!("basis columns are linearly dependent (rank {rank} < {p})"));
    }
    let norm2 = basis.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max);
    let dot = |w: &[f64], k: usize| basis[k].iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
    let mut w = vec![0.0; p];
    let mut counts = vec![0u64; rows];
    let bound = 10.0 * value_bound(mg);
    let mut sampler = Sampler::new(mg);
    for t in 0..steps {
        let smp = sampler.step(rng);
        counts[smp.row] += 1;
        let target = smp.reward + mg.gamma * max_next(mg, |k| dot(&w, k), smp.s_next, smp.i_next);
        let td = target - dot(&w, smp.row);
        let alpha = schedule.at(t) / norm2;
        for (wj, x) in w.iter_mut().zip(&basis[smp.row]) {
            *wj += alpha * td * x;
        }
        if w.iter().any(|x| !x.is_finite()) || dot(&w, smp.row).abs() > bound {
            return Err(RosaError::Numerical(format!("linear Q-learning diverged at step {t}")));
        }
    }
    let fitted: Vec<f64> = (0..rows).map(|k| dot(&w, k)).collect();
    let qs = q_star(mg)?;
    let total = counts.iter().sum::<u64>().max(1) as f64;
    let dvec: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let d_norm = |v: &[f64]| v.iter().zip(&dvec).map(|(x, d)| d * x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = fitted.iter().zip(&qs).map(|(a, b)| a - b).collect();
    let error = d_norm(&diff);
    // D-weighted least squares projection of Q* onto span(Psi)
    let dmat = DMatrix::from_diagonal(&DVector::from_vec(dvec.clone()));
    let gram = psi.transpose() * &dmat * &psi;
    let rhs = psi.transpose() * &dmat * DVector::from_vec(qs.clone());
    let coef = gram.lu().solve(&rhs).ok_or_else(|| RosaError::Numerical("singular weighted Gram matrix".into()))?;
    let proj = &psi * coef;
    let pdiff: Vec<f64> = proj.iter().zip(&qs).map(|(a, b)| a - b).collect();
    let projection_error = d_norm(&pdiff);
    let bound = projection_error / (1.0 - mg.gamma * mg.gamma).sqrt();
    Ok(LinearFa { weights: w, fitted, q_star: qs, visitation: dvec, error, projection_error, bound })
}

/// Indicator basis: one feature per `(s, I, a, d)` row.
pub fn indicator_basis(mg: &TabularMG) -> Vec<Vec<f64>> {
    let rows = mg.n_states * 4 * mg.n_actions;
    (0..rows).map(|k| (0..rows).map(|j| f64::from(j == k)).collect()).collect()
}

/// Aggregation basis: rows are grouped by `group(s, I, a, d)` into `n_groups` indicators.
pub fn aggregation_basis(mg: &TabularMG, n_groups: usize, group: impl Fn(usize, usize, usize, usize) -> usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n_groups]; mg.n_states * 4 * mg.n_actions];
    for s in 0..mg.n_states {
        for i in 0..2 {
            for a in 0..mg.n_actions {
                for d in 0..2 {
                    out[q_index(mg, s, i, a, d)][group(s, i, a, d)] = 1.0;
                }
            }
        }
    }
    out
}
