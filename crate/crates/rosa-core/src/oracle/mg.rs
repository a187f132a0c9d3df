//! Finite switching-control games and their text instance format.
//!
//! The augmented state is `(s, I)` where `I` is the switch register carried
//! into `s`. At each augmented state the decision is a controller action `a`
//! plus an intervention bit `d`; intervening flips the register, costs `c`,
//! and the flipped register is the shaping status for the step. Shaping is
//! potential-based on the augmented chain with potential
//! `Psi(s, I) = I * sum_k pi2(k|s) phi(s, k)`, so an intervention from `I = 0`
//! starts from the null potential.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Result, RosaError};

pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMG {
    pub n_states: usize,
    pub n_actions: usize,
    /// Including the null action 0.
    pub n_shaper_actions: usize,
    /// `p[s][a][s']`.
    pub p: Vec<Vec<Vec<f64>>>,
    /// `r[s][a]`.
    pub r: Vec<Vec<f64>>,
    /// `phi[s][a2]` with `phi[s][0] == 0`.
    pub phi: Vec<Vec<f64>>,
    pub c: f64,
    pub gamma: f64,
    /// Per-state bonus credited while shaping is active. Zero by default.
    pub bonus: Vec<f64>,
    /// Magnitude policy `pi2[s][k-1]` over the non-null actions. `None` means
    /// the deterministic rule `argmax_k phi(s, k)`.
    pub shaper: Option<Vec<Vec<f64>>>,
}

/// Value table over `(s, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugValue {
    pub v: Vec<[f64; 2]>,
}

impl AugValue {
    pub fn zeros(n: usize) -> Self {
        AugValue { v: vec![[0.0; 2]; n] }
    }

    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.v[s][i]
    }

    pub fn sup_dist(&self, other: &AugValue) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.v.iter().flat_map(|a| [a[0].abs(), a[1].abs()]).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|a| a[0].is_finite() && a[1].is_finite())
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(RosaError::Construction(msg.into()))
}

impl TabularMG {
    pub fn validate(&self) -> Result<()> {
        let (n, na, nk) = (self.n_states, self.n_actions, self.n_shaper_actions);
        if n == 0 || na == 0 || nk < 2 {
            return bad("need at least one state, one action and one non-null shaper action");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.c < 0.0) {
            return bad(format!("switch cost must be strictly negative, got {}", self.c));
        }
        if self.p.len() != n || self.r.len() != n || self.phi.len() != n || self.bonus.len() != n {
            return bad("table sizes do not match n_states");
        }
        for s in 0..n {
            if self.p[s].len() != na || self.r[s].len() != na || self.phi[s].len() != nk {
                return bad(format!("row sizes wrong at state {s}"));
            }
            for a in 0..na {
                let row = &self.p[s][a];
                if row.len() != n || row.iter().any(|&x| !(x >= 0.0)) {
                    return bad(format!("P[{s}][{a}] is not a probability vector"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
                    return bad(format!("P[{s}][{a}] sums to {}", row.iter().sum::<f64>()));
                }
            }
            if self.phi[s][0] != 0.0 {
                return bad(format!("phi[{s}][0] must be 0"));
            }
        }
        if let Some(pi2) = &self.shaper {
            if pi2.len() != n {
                return bad("shaper policy has the wrong number of states");
            }
            for row in pi2 {
                if row.len() != nk - 1 || row.iter().any(|&x| !(x >= 0.0)) {
                    return bad("shaper policy row is not a distribution over the non-null actions");
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("shaper policy row does not sum to 1");
                }
            }
        }
        let finite = self.r.iter().flatten().chain(self.phi.iter().flatten()).chain(&self.bonus);
        if finite.into_iter().any(|x| !x.is_finite()) {
            return bad("non-finite reward, potential or bonus entry");
        }
        Ok(())
    }

    /// Magnitude policy actually in force (explicit table or the argmax rule).
    pub fn shaper_policy(&self) -> Vec<Vec<f64>> {
        if let Some(p) = &self.shaper {
            return p.clone();
        }
        (0..self.n_states)
            .map(|s| {
                let row = &self.phi[s][1..];
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                let mut v = vec![0.0; row.len()];
                v[best] = 1.0;
                v
            })
            .collect()
    }

    /// Expected potential `sum_k pi2(k|s) phi(s, k)` under a magnitude policy.
    pub fn mean_potential(&self, pi2: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| pi2[s].iter().zip(&self.phi[s][1..]).map(|(p, f)| p * f).sum())
            .collect()
    }

    /// `Psi(s, I)` for the magnitude policy in force.
    pub fn aug_potential(&self) -> Vec<[f64; 2]> {
        self.mean_potential(&self.shaper_policy()).into_iter().map(|f| [0.0, f]).collect()
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.r.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.phi.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn with_scaled_phi(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.phi.iter_mut().flatten().for_each(|x| *x *= k);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens: Vec<&str> = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap();
            tokens.extend(line.split_whitespace());
        }
        let mut it = tokens.into_iter().peekable();
        let perr = |m: String| RosaError::Parse(m);
        let expect = |key: &str, it: &mut std::iter::Peekable<std::vec::IntoIter<&str>>| -> Result<()> {
            match it.next() {
                Some(k) if k == key => Ok(()),
                other => Err(perr(format!("expected '{key}', found {other:?}"))),
            }
        };
        fn num<'a>(it: &mut impl Iterator<Item = &'a str>) -> Result<f64> {
            let t = it.next().ok_or_else(|| RosaError::Parse("unexpected end of instance".into()))?;
            t.parse::<f64>().map_err(|e| RosaError::Parse(format!("bad number {t:?}: {e}")))
        }
        fn count<'a>(it: &mut impl Iterator<Item = &'a str>) -> Result<usize> {
            let t = it.next().ok_or_else(|| RosaError::Parse("unexpected end of instance".into()))?;
            t.parse::<usize>().map_err(|e| RosaError::Parse(format!("bad count {t:?}: {e}")))
        }
        expect("rosa-mg", &mut it)?;
        let version = count(&mut it)?;
        if version != 1 {
            return Err(RosaError::Parse(format!("unsupported instance version {version}")));
        }
        expect("n_states", &mut it)?;
        let n = count(&mut it)?;
        expect("n_actions", &mut it)?;
        let na = count(&mut it)?;
        expect("n_shaper_actions", &mut it)?;
        let nk = count(&mut it)?;
        expect("gamma", &mut it)?;
        let gamma = num(&mut it)?;
        expect("cost", &mut it)?;
        let c = num(&mut it)?;
        expect("P", &mut it)?;
        let mut p = vec![vec![vec![0.0; n]; na]; n];
        for row in p.iter_mut().flatten() {
            for x in row.iter_mut() {
                *x = num(&mut it)?;
            }
        }
        expect("R", &mut it)?;
        let mut r = vec![vec![0.0; na]; n];
        for x in r.iter_mut().flatten() {
            *x = num(&mut it)?;
        }
        expect("PHI", &mut it)?;
        let mut phi = vec![vec![0.0; nk]; n];
        for x in phi.iter_mut().flatten() {
            *x = num(&mut it)?;
        }
        let mut bonus = vec![0.0; n];
        let mut shaper = None;
        while let Some(section) = it.next() {
            match section {
                "BONUS" => {
                    for x in bonus.iter_mut() {
                        *x = num(&mut it)?;
                    }
                }
                "SHAPER" => {
                    let mut t = vec![vec![0.0; nk.saturating_sub(1)]; n];
                    for x in t.iter_mut().flatten() {
                        *x = num(&mut it)?;
                    }
                    shaper = Some(t);
                }
                other => return Err(RosaError::Parse(format!("unknown section {other:?}"))),
            }
        }
        let mg = TabularMG { n_states: n, n_actions: na, n_shaper_actions: nk, p, r, phi, c, gamma, bonus, shaper };
        mg.validate()?;
        Ok(mg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "rosa-mg 1").unwrap();
        writeln!(out, "n_states {}", self.n_states).unwrap();
        writeln!(out, "n_actions {}", self.n_actions).unwrap();
        writeln!(out, "n_shaper_actions {}", self.n_shaper_actions).unwrap();
        writeln!(out, "gamma {:?}", self.gamma).unwrap();
        writeln!(out, "cost {:?}", self.c).unwrap();
        writeln!(out, "P").unwrap();
        for (s, rows) in self.p.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                writeln!(out, "{}  # s={s} a={a}", join(row)).unwrap();
            }
        }
        writeln!(out, "R").unwrap();
        for row in &self.r {
            writeln!(out, "{}", join(row)).unwrap();
        }
        writeln!(out, "PHI").unwrap();
        for row in &self.phi {
            writeln!(out, "{}", join(row)).unwrap();
        }
        if self.bonus.iter().any(|&b| b != 0.0) {
            writeln!(out, "BONUS").unwrap();
            writeln!(out, "{}", join(&self.bonus)).unwrap();
        }
        if let Some(t) = &self.shaper {
            writeln!(out, "SHAPER").unwrap();
            for row in t {
                writeln!(out, "{}", join(row)).unwrap();
            }
        }
        out
    }
}

/// Parameters for [`random_mg`].
#[derive(Debug, Clone)]
pub struct RandomMgSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_shaper_actions: usize,
    pub gamma: std::ops::Range<f64>,
    pub cost: std::ops::Range<f64>,
    pub reward_scale: f64,
    pub phi_scale: f64,
}

impl RandomMgSpec {
    pub fn new(n_states: usize, n_actions: usize, n_shaper_actions: usize) -> Self {
        RandomMgSpec {
            n_states,
            n_actions,
            n_shaper_actions,
            gamma: 0.5..0.95,
            cost: -0.5..-0.01,
            reward_scale: 1.0,
            phi_scale: 1.0,
        }
    }
}

/// Dense random instance: every transition row has full support.
pub fn random_mg<R: Rng + ?Sized>(spec: &RandomMgSpec, rng: &mut R) -> TabularMG {
    let n = spec.n_states;
    let p = (0..n)
        .map(|_| {
            (0..spec.n_actions)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                    let z: f64 = w.iter().sum();
                    let mut row: Vec<f64> = w.iter().map(|x| x / z).collect();
                    // push the rounding residue into the largest entry
                    let resid = 1.0 - row.iter().sum::<f64>();
                    let imax = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                    row[imax] += resid;
                    row
                })
                .collect()
        })
        .collect();
    let r = (0..n)
        .map(|_| (0..spec.n_actions).map(|_| spec.reward_scale * rng.random_range(-1.0..1.0)).collect())
        .collect();
    let phi = (0..n)
        .map(|_| {
            let mut row = vec![0.0];
            row.extend((1..spec.n_shaper_actions).map(|_| spec.phi_scale * rng.random_range(-1.0..1.0)));
            row
        })
        .collect();
    TabularMG {
        n_states: n,
        n_actions: spec.n_actions,
        n_shaper_actions: spec.n_shaper_actions,
        p,
        r,
        phi,
        c: rng.random_range(spec.cost.clone()),
        gamma: rng.random_range(spec.gamma.clone()),
        bonus: vec![0.0; n],
        shaper: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn text_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mg = random_mg(&RandomMgSpec::new(3, 2, 3), &mut rng);
        mg.bonus = vec![0.0, 0.5, 0.0];
        mg.shaper = Some(vec![vec![0.5, 0.5], vec![1.0, 0.0], vec![0.25, 0.75]]);
        let back = TabularMG::parse(&mg.to_text()).unwrap();
        assert_eq!(mg, back);
    }

    #[test]
    fn rejects_bad_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mg = random_mg(&RandomMgSpec::new(3, 2, 2), &mut rng);
        let mut m = mg.clone();
        m.p[0][0][0] += 0.1;
        assert!(m.validate().is_err());
        let mut m = mg.clone();
        m.phi[1][0] = 0.2;
        assert!(m.validate().is_err());
        let mut m = mg.clone();
        m.gamma = 1.0;
        assert!(m.validate().is_err());
        let mut m = mg;
        m.c = 0.0;
        assert!(m.validate().is_err());
    }
}
