//! Optimal-policy invariance of the controller under fixed shaper behaviour.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{argmax_set, FiniteMdp};
use super::mg::TabularMG;
use super::ops::base_mdp;
use crate::error::Result;

/// A fixed shaper: intervention bits per `(s, I)` and a magnitude policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperStrategy {
    pub name: String,
    pub switch: Vec<[usize; 2]>,
    pub pi2: Vec<Vec<f64>>,
    pub phi_scale: f64,
}

impl ShaperStrategy {
    pub fn never(mg: &TabularMG) -> Self {
        ShaperStrategy {
            name: "never".into(),
            switch: vec![[0, 0]; mg.n_states],
            pi2: mg.shaper_policy(),
            phi_scale: 1.0,
        }
    }

    /// Switch on at the first step and stay on.
    pub fn always_on(mg: &TabularMG, phi_scale: f64) -> Self {
        ShaperStrategy {
            name: format!("always_on_x{phi_scale}"),
            switch: vec![[1, 0]; mg.n_states],
            pi2: mg.shaper_policy(),
            phi_scale,
        }
    }

    pub fn random<R: Rng + ?Sized>(mg: &TabularMG, phi_scale: f64, rng: &mut R) -> Self {
        let k = mg.n_shaper_actions - 1;
        let pi2 = (0..mg.n_states)
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            })
            .collect();
        ShaperStrategy {
            name: format!("random_x{phi_scale}"),
            switch: (0..mg.n_states).map(|_| [rng.random_range(0..2), rng.random_range(0..2)]).collect(),
            pi2,
            phi_scale,
        }
    }

    /// The controller's problem: an MDP over `x = 2s + I` with the shaper fixed.
    pub fn controller_mdp(&self, mg: &TabularMG) -> FiniteMdp {
        let n = mg.n_states;
        let pot: Vec<f64> = mg.mean_potential(&self.pi2).into_iter().map(|f| f * self.phi_scale).collect();
        let psi = |s: usize, i: usize| if i == 1 { pot[s] } else { 0.0 };
        let mut p = vec![vec![vec![0.0; 2 * n]; mg.n_actions]; 2 * n];
        let mut r = vec![vec![0.0; mg.n_actions]; 2 * n];
        for s in 0..n {
            for i in 0..2 {
                let j = i ^ self.switch[s][i];
                for a in 0..mg.n_actions {
                    let mut next = 0.0;
                    for s2 in 0..n {
                        p[2 * s + i][a][2 * s2 + j] += mg.p[s][a][s2];
                        next += mg.p[s][a][s2] * psi(s2, j);
                    }
                    r[2 * s + i][a] = mg.r[s][a] + mg.gamma * next - psi(s, i);
                }
            }
        }
        FiniteMdp { p, r, gamma: mg.gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCase {
    pub strategy: String,
    /// `(s, I)` where the shaped argmax set differs from the plain one.
    pub mismatches: Vec<(usize, usize)>,
    /// Largest `|extrinsic value of shaped-optimal controller - plain optimum|`.
    pub value_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub cases: Vec<InvarianceCase>,
    pub value_tol: f64,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.mismatches.is_empty() && c.value_gap <= self.value_tol)
    }

    pub fn max_gap(&self) -> f64 {
        self.cases.iter().map(|c| c.value_gap).fold(0.0, f64::max)
    }
}

const SOLVE_TOL: f64 = 1e-12;
const ARGMAX_TOL: f64 = 1e-9;

/// Run the invariance comparison against the default family of shaper strategies.
pub fn invariance_check(mg: &TabularMG) -> Result<InvarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ mg.n_states as u64);
    let strategies = vec![
        ShaperStrategy::never(mg),
        ShaperStrategy::always_on(mg, 1.0),
        ShaperStrategy::always_on(mg, 100.0),
        ShaperStrategy::random(mg, 1.0, &mut rng),
        ShaperStrategy::random(mg, 100.0, &mut rng),
    ];
    invariance_check_with(mg, &strategies, 1e-8)
}

pub fn invariance_check_with(mg: &TabularMG, strategies: &[ShaperStrategy], value_tol: f64) -> Result<InvarianceReport> {
    mg.validate()?;
    let plain = base_mdp(mg);
    let plain_sol = plain.solve(SOLVE_TOL, 1_000_000)?;
    let v_plain = plain.evaluate(&plain_sol.policy);
    let plain_q = plain.q_from(&v_plain);
    let mut cases = Vec::new();
    for strat in strategies {
        let shaped = strat.controller_mdp(mg);
        let sol = shaped.solve(SOLVE_TOL, 1_000_000)?;
        // refine with an exact evaluation before reading off argmax sets
        let v_exact = shaped.evaluate(&sol.policy);
        let q = shaped.q_from(&v_exact);
        let mut mismatches = Vec::new();
        for s in 0..mg.n_states {
            for i in 0..2 {
                if argmax_set(&q[2 * s + i], ARGMAX_TOL) != argmax_set(&plain_q[s], ARGMAX_TOL) {
                    mismatches.push((s, i));
                }
            }
        }
        let extrinsic = FiniteMdp { p: shaped.p.clone(), r: (0..2 * mg.n_states).map(|x| mg.r[x / 2].clone()).collect(), gamma: mg.gamma };
        let v_ext = extrinsic.evaluate(&sol.policy);
        let value_gap = (0..2 * mg.n_states).map(|x| (v_ext[x] - v_plain[x / 2]).abs()).fold(0.0, f64::max);
        cases.push(InvarianceCase { strategy: strat.name.clone(), mismatches, value_gap });
    }
    Ok(InvarianceReport { cases, value_tol })
}
