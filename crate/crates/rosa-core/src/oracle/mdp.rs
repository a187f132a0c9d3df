//! Plain finite MDPs: value iteration, exact policy evaluation, exhaustive search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result, RosaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    /// `p[s][a][s']`.
    pub p: Vec<Vec<Vec<f64>>>,
    /// `r[s][a]`, expected one-step reward.
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    /// Greedy policy, lowest index among near-ties.
    pub policy: Vec<usize>,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Indices within `tol` of the row maximum.
pub fn argmax_set(row: &[f64], tol: f64) -> Vec<usize> {
    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&a| row[a] >= best - tol).collect()
}

impl FiniteMdp {
    pub fn n_states(&self) -> usize {
        self.p.len()
    }

    pub fn n_actions(&self) -> usize {
        self.p.first().map_or(0, |r| r.len())
    }

    pub fn q_from(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n_states())
            .map(|s| {
                (0..self.n_actions())
                    .map(|a| {
                        let cont: f64 = self.p[s][a].iter().zip(v).map(|(p, x)| p * x).sum();
                        self.r[s][a] + self.gamma * cont
                    })
                    .collect()
            })
            .collect()
    }

    /// Value iteration until the sup-norm step is below `tol`.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<MdpSolution> {
        if !(0.0..1.0).contains(&self.gamma) {
            return usage("gamma must lie in [0, 1)");
        }
        let n = self.n_states();
        let mut v = vec![0.0; n];
        for it in 1..=max_iter {
            let q = self.q_from(&v);
            let next: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
            let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if diff < tol {
                let q = self.q_from(&v);
                let policy = q.iter().map(|row| argmax_set(row, 0.0)[0]).collect();
                return Ok(MdpSolution { policy, v, q, iterations: it });
            }
        }
        Err(RosaError::NoConvergence { iterations: max_iter, residual: f64::NAN })
    }

    /// Exact value of a deterministic policy by solving `(I - gamma P) v = r`.
    pub fn evaluate(&self, policy: &[usize]) -> Vec<f64> {
        let n = self.n_states();
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            let a = policy[s];
            b[s] = self.r[s][a];
            for (s2, p) in self.p[s][a].iter().enumerate() {
                m[(s, s2)] -= self.gamma * p;
            }
        }
        m.lu().solve(&b).expect("I - gamma P is invertible for gamma < 1").iter().cloned().collect()
    }

    /// Exact value of a stochastic policy `pi[s][a]`.
    pub fn evaluate_stochastic(&self, pi: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n_states();
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for s in 0..n {
            for (a, w) in pi[s].iter().enumerate() {
                b[s] += w * self.r[s][a];
                for (s2, p) in self.p[s][a].iter().enumerate() {
                    m[(s, s2)] -= self.gamma * w * p;
                }
            }
        }
        m.lu().solve(&b).expect("I - gamma P is invertible for gamma < 1").iter().cloned().collect()
    }

    /// Pointwise maximum of the value over every deterministic stationary policy.
    pub fn brute_force(&self, max_policies: u64) -> Result<Vec<f64>> {
        let (n, na) = (self.n_states(), self.n_actions());
        let total = (na as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
        if total > max_policies {
            return usage(format!("{total} policies exceed the enumeration budget {max_policies}"));
        }
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut policy = vec![0usize; n];
        loop {
            let v = self.evaluate(&policy);
            for s in 0..n {
                best[s] = best[s].max(v[s]);
            }
            // mixed-radix increment
            let mut i = 0;
            loop {
                if i == n {
                    return Ok(best);
                }
                policy[i] += 1;
                if policy[i] < na {
                    break;
                }
                policy[i] = 0;
                i += 1;
            }
        }
    }
}

/// Value iteration on a plain MDP given as tables.
pub fn solve_mdp(p: &[Vec<Vec<f64>>], r: &[Vec<f64>], gamma: f64, tol: f64) -> Result<MdpSolution> {
    FiniteMdp { p: p.to_vec(), r: r.to_vec(), gamma }.solve(tol, 1_000_000)
}
