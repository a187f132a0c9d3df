//! The property suite run by the `oracle` command over instance files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::invariance::invariance_check;
use super::mg::{AugValue, TabularMG};
use super::ops::{
    base_mdp, bellman_branches, bellman_op, brute_force_values, extrinsic_value, greedy_policy, switch_rule,
    value_iterate, TIE_TOL,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    /// `None` when the property does not apply to the instance.
    pub passed: Option<bool>,
    pub detail: String,
}

fn result(name: &str, passed: bool, detail: String) -> PropertyResult {
    PropertyResult { name: name.into(), passed: Some(passed), detail }
}

pub fn random_value<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> AugValue {
    AugValue { v: (0..n).map(|_| [scale * rng.random_range(-1.0..1.0), scale * rng.random_range(-1.0..1.0)]).collect() }
}

/// Largest observed `||TV - TV'|| / (gamma ||V - V'||)`, which must not exceed 1.
pub fn contraction_ratio<R: Rng + ?Sized>(mg: &TabularMG, pairs: usize, rng: &mut R) -> (f64, usize) {
    let mut worst = 0.0_f64;
    let mut violations = 0;
    for _ in 0..pairs {
        let scale = 10.0_f64.powf(rng.random_range(-1.0..2.0));
        let v = random_value(mg.n_states, scale, rng);
        let w = random_value(mg.n_states, scale, rng);
        let (tv, tw) = (bellman_op(mg, &v), bellman_op(mg, &w));
        let lhs = tv.sup_dist(&tw);
        let rhs = mg.gamma * v.sup_dist(&w);
        if lhs > rhs + rounding_allowance(mg, &[&v, &w, &tv, &tw]) {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    (worst, violations)
}

/// Worst-case floating-point error of one backup and the differences taken on it.
/// Zero in exact arithmetic: it only absorbs rounding where the contraction bound is tight.
pub fn rounding_allowance(mg: &TabularMG, values: &[&AugValue]) -> f64 {
    let l = mg.bonus.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let terms = mg.max_abs_reward() + mg.c.abs() + l + 2.0 * mg.max_abs_phi();
    let scale = values.iter().map(|v| v.sup_norm()).fold(terms, f64::max);
    16.0 * f64::EPSILON * scale * (mg.n_states as f64 + 4.0)
}

/// Where the intervention branch strictly wins, compared with [`switch_rule`].
pub fn switch_rule_mismatches(mg: &TabularMG, v: &AugValue) -> Vec<(usize, usize)> {
    let branches = bellman_branches(mg, v);
    let mut out = Vec::new();
    for s in 0..mg.n_states {
        for i in 0..2 {
            let (m, n) = branches[s][i];
            let strict = m > n + TIE_TOL;
            if (switch_rule(mg, v, s, i) == 1) != strict {
                out.push((s, i));
            }
        }
    }
    out
}

/// Smallest `extrinsic(MG solution)(s, 0) - V_mdp(s)` over states.
pub fn improvement_margin(mg: &TabularMG, v_star: &AugValue) -> Result<f64> {
    let pol = greedy_policy(mg, v_star);
    let ext = extrinsic_value(mg, &pol);
    let plain = base_mdp(mg);
    let sol = plain.solve(1e-12, 1_000_000)?;
    let v_plain = plain.evaluate(&sol.policy);
    Ok((0..mg.n_states).map(|s| ext.v[s][0] - v_plain[s]).fold(f64::INFINITY, f64::min))
}

pub const BRUTE_FORCE_BUDGET: u64 = 2_000_000;

pub fn run_suite(mg: &TabularMG, seed: u64) -> Vec<PropertyResult> {
    let mut out = Vec::new();
    if let Err(e) = mg.validate() {
        out.push(result("instance_valid", false, e.to_string()));
        return out;
    }
    out.push(result("instance_valid", true, String::new()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vi = match value_iterate(mg, 1e-10, 1_000_000) {
        Ok(vi) => vi,
        Err(e) => {
            out.push(result("value_iteration_converges", false, e.to_string()));
            return out;
        }
    };
    out.push(result("value_iteration_converges", true, format!("{} iterations", vi.iterations)));
    let fp = bellman_op(mg, &vi.v).sup_dist(&vi.v);
    out.push(result("fixed_point", fp < 1e-10, format!("||TV*-V*|| = {fp:e}")));

    let (ratio, violations) = contraction_ratio(mg, 100, &mut rng);
    out.push(result("contraction", violations == 0, format!("worst ratio {ratio:.6}, {violations} violations")));

    let mut mono_fail = 0;
    for _ in 0..50 {
        let v = random_value(mg.n_states, 5.0, &mut rng);
        let mut w = v.clone();
        w.v.iter_mut().flatten().for_each(|x| *x += rng.random_range(0.0..1.0));
        let (tv, tw) = (bellman_op(mg, &v), bellman_op(mg, &w));
        if tv.v.iter().flatten().zip(tw.v.iter().flatten()).any(|(a, b)| a > b) {
            mono_fail += 1;
        }
    }
    out.push(result("monotonicity", mono_fail == 0, format!("{mono_fail} violations in 50 pairs")));

    match brute_force_values(mg, BRUTE_FORCE_BUDGET) {
        Ok(bf) => {
            let gap = bf.sup_dist(&vi.v);
            out.push(result("brute_force", gap <= 1e-8, format!("||V* - V_enum|| = {gap:e}")));
        }
        Err(e) => out.push(PropertyResult { name: "brute_force".into(), passed: None, detail: e.to_string() }),
    }

    let mism = switch_rule_mismatches(mg, &vi.v);
    out.push(result("switch_rule_consistency", mism.is_empty(), format!("{} mismatches", mism.len())));

    if mg.bonus.iter().all(|&b| b == 0.0) {
        match improvement_margin(mg, &vi.v) {
            Ok(m) => out.push(result("improvement_direction", m >= -1e-8, format!("min margin {m:e}"))),
            Err(e) => out.push(result("improvement_direction", false, e.to_string())),
        }
    } else {
        out.push(PropertyResult {
            name: "improvement_direction".into(),
            passed: None,
            detail: "instance carries a non-zero bonus".into(),
        });
    }

    if mg.n_states <= 12 {
        match invariance_check(mg) {
            Ok(rep) => out.push(result(
                "policy_invariance",
                rep.passed(),
                format!("max value gap {:e}, {} argmax mismatches", rep.max_gap(), rep.cases.iter().map(|c| c.mismatches.len()).sum::<usize>()),
            )),
            Err(e) => out.push(result("policy_invariance", false, e.to_string())),
        }
    }
    out
}
