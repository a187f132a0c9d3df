use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rosa_core::oracle::mdp::FiniteMdp;
use rosa_core::oracle::ops::{
    base_mdp, bellman_branches, bellman_op, brute_force_values, continuation_op, greedy_policy, intervention_op,
    switch_rule, value_iterate, CtrlChoice, TIE_TOL,
};
use rosa_core::oracle::qlearn::{
    aggregation_basis, indicator_basis, linear_fa_q, q_learning_switch, q_star, sup_dist, AlphaSchedule,
};
use rosa_core::oracle::suite::{contraction_ratio, improvement_margin, random_value, switch_rule_mismatches};
use rosa_core::oracle::{invariance_check, random_mg, AugValue, RandomMgSpec, ShaperStrategy, TabularMG};

fn two_state_chain() -> TabularMG {
    TabularMG {
        n_states: 2,
        n_actions: 1,
        n_shaper_actions: 2,
        p: vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        r: vec![vec![1.0], vec![0.0]],
        phi: vec![vec![0.0, 0.5], vec![0.0, -1.0]],
        c: -0.2,
        gamma: 0.5,
        bonus: vec![0.0; 2],
        shaper: None,
    }
}

fn mg_from_seed(seed: u64, n: usize, na: usize, nk: usize) -> TabularMG {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mg(&RandomMgSpec::new(n, na, nk), &mut rng)
}

#[test]
fn intervention_matches_hand_computation() {
    let mg = two_state_chain();
    let pi2 = mg.shaper_policy();
    let v = AugValue { v: vec![[1.0, 2.0], [3.0, 4.0]] };
    // r + c - Psi(s, I) + gamma (Psi(s', I xor 1) + V(s', I xor 1))
    let m00 = intervention_op(&mg, &v, 0, 0, CtrlChoice::Greedy, &pi2);
    assert!((m00 - (1.0 - 0.2 + 0.5 * (-1.0 + 4.0))).abs() < 1e-12);
    let m01 = intervention_op(&mg, &v, 0, 1, CtrlChoice::Greedy, &pi2);
    assert!((m01 - (1.0 - 0.2 - 0.5 + 0.5 * 3.0)).abs() < 1e-12);
    let n00 = continuation_op(&mg, &v, 0, 0, CtrlChoice::Greedy, &pi2);
    assert!((n00 - (1.0 + 0.5 * 3.0)).abs() < 1e-12);
    let n11 = continuation_op(&mg, &v, 1, 1, CtrlChoice::Greedy, &pi2);
    assert!((n11 - (0.0 + 1.0 + 0.5 * (0.5 + 2.0))).abs() < 1e-12);
}

#[test]
fn intervention_without_potential_is_plain_backup_minus_cost() {
    let mut mg = mg_from_seed(3, 4, 3, 3);
    mg.phi.iter_mut().flatten().for_each(|x| *x = 0.0);
    mg.c = -1e-3;
    let pi2 = mg.shaper_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v = random_value(mg.n_states, 3.0, &mut rng);
    for s in 0..mg.n_states {
        for i in 0..2 {
            let plain = (0..mg.n_actions)
                .map(|a| mg.r[s][a] + mg.gamma * (0..mg.n_states).map(|s2| mg.p[s][a][s2] * v.v[s2][1 - i]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let m = intervention_op(&mg, &v, s, i, CtrlChoice::Greedy, &pi2);
            assert!((m - (plain - 1e-3)).abs() < 1e-12);
        }
    }
}

#[test]
fn intervention_with_controller_distribution_averages_backups() {
    let mg = mg_from_seed(5, 3, 2, 2);
    let pi2 = mg.shaper_policy();
    let v = AugValue::zeros(3);
    let a0 = intervention_op(&mg, &v, 1, 0, CtrlChoice::Dist(&[1.0, 0.0]), &pi2);
    let a1 = intervention_op(&mg, &v, 1, 0, CtrlChoice::Dist(&[0.0, 1.0]), &pi2);
    let mix = intervention_op(&mg, &v, 1, 0, CtrlChoice::Dist(&[0.25, 0.75]), &pi2);
    assert!((mix - (0.25 * a0 + 0.75 * a1)).abs() < 1e-12);
    let greedy = intervention_op(&mg, &v, 1, 0, CtrlChoice::Greedy, &pi2);
    assert_eq!(greedy, a0.max(a1));
}

#[test]
fn prohibitive_cost_makes_intervention_unprofitable() {
    for seed in 0..5 {
        let mut mg = mg_from_seed(seed, 4, 2, 3);
        mg.c = -1e6;
        let vi = value_iterate(&mg, 1e-10, 100_000).unwrap();
        let pi2 = mg.shaper_policy();
        for s in 0..mg.n_states {
            for i in 0..2 {
                assert!(intervention_op(&mg, &vi.v, s, i, CtrlChoice::Greedy, &pi2) < vi.v.v[s][i]);
                assert_eq!(switch_rule(&mg, &vi.v, s, i), 0);
            }
        }
        // the I = 0 slice of T is the ordinary Bellman operator
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_value(mg.n_states, 5.0, &mut rng);
        let tv = bellman_op(&mg, &v);
        for s in 0..mg.n_states {
            let plain = (0..mg.n_actions)
                .map(|a| mg.r[s][a] + mg.gamma * (0..mg.n_states).map(|s2| mg.p[s][a][s2] * v.v[s2][0]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((tv.v[s][0] - plain).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_reward_chain_values_geometric_series() {
    let mg = TabularMG {
        n_states: 2,
        n_actions: 1,
        n_shaper_actions: 2,
        p: vec![vec![vec![0.5, 0.5]], vec![vec![0.0, 1.0]]],
        r: vec![vec![1.0], vec![1.0]],
        phi: vec![vec![0.0, 0.3], vec![0.0, -0.7]],
        c: -1e6,
        gamma: 0.5,
        bonus: vec![0.0; 2],
        shaper: None,
    };
    let vi = value_iterate(&mg, 1e-10, 10_000).unwrap();
    for s in 0..2 {
        assert!((vi.v.v[s][0] - 2.0).abs() < 1e-9);
    }
}

#[test]
fn value_iteration_converges_geometrically() {
    for seed in 0..10 {
        let mg = mg_from_seed(seed, 6, 3, 3);
        let vi = value_iterate(&mg, 1e-10, 100_000).unwrap();
        assert!(bellman_op(&mg, &vi.v).sup_dist(&vi.v) < 1e-10);
        for w in vi.residuals.windows(2).skip(5) {
            // below ~1e-8 the residual is dominated by rounding of entries of size ~10
            if w[1] > 1e-8 {
                assert!(w[1] / w[0] <= mg.gamma + 1e-6, "ratio {} above gamma {}", w[1] / w[0], mg.gamma);
            }
        }
        let first = vi.residuals[0];
        let predicted = ((1e-10 * (1.0 - mg.gamma) / first).ln() / mg.gamma.ln()).ceil() as usize;
        assert!(vi.iterations <= predicted + 10, "{} iterations, predicted {predicted}", vi.iterations);
    }
}

#[test]
fn fixed_point_is_idempotent_and_matches_enumeration() {
    for seed in 0..3 {
        let mg = mg_from_seed(100 + seed, 5, 2, 2);
        let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
        assert!(bellman_op(&mg, &vi.v).sup_dist(&vi.v) < 1e-10);
        let bf = brute_force_values(&mg, 2_000_000).unwrap();
        assert!(bf.sup_dist(&vi.v) < 1e-8, "gap {}", bf.sup_dist(&vi.v));
    }
}

#[test]
fn brute_force_refuses_oversized_enumerations() {
    let mg = mg_from_seed(1, 8, 3, 2);
    assert!(brute_force_values(&mg, 1000).is_err());
}

#[test]
fn value_bound_holds_after_convergence() {
    for seed in 0..10 {
        let mg = mg_from_seed(200 + seed, 5, 3, 4);
        let vi = value_iterate(&mg, 1e-10, 100_000).unwrap();
        let bound = mg.max_abs_reward() / (1.0 - mg.gamma) + mg.c.abs() + mg.max_abs_phi() * (1.0 + 1.0 / mg.gamma);
        assert!(vi.v.sup_norm() <= bound);
    }
}

/// Three-state cycle with a bonus only at state 1: switching on pays there and nowhere else.
fn engineered_three_state() -> TabularMG {
    let cycle = |to: usize| {
        let mut row = vec![0.0; 3];
        row[to] = 1.0;
        vec![row.clone(), row]
    };
    TabularMG {
        n_states: 3,
        n_actions: 2,
        n_shaper_actions: 3,
        p: vec![cycle(1), cycle(2), cycle(0)],
        r: vec![vec![0.0, -0.05], vec![0.1, 0.0], vec![0.0, 0.0]],
        phi: vec![vec![0.0, 0.4, -0.2], vec![0.0, -0.3, 0.6], vec![0.0, 0.1, 0.2]],
        c: -0.1,
        gamma: 0.9,
        bonus: vec![0.0, 1.0, 0.0],
        shaper: None,
    }
}

#[test]
fn engineered_instance_switches_only_at_the_bonus_state() {
    let mg = engineered_three_state();
    let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
    let rule: Vec<[u8; 2]> = (0..3).map(|s| [switch_rule(&mg, &vi.v, s, 0), switch_rule(&mg, &vi.v, s, 1)]).collect();
    assert_eq!(rule, vec![[0, 0], [1, 0], [0, 0]]);
    // exhaustive check: the greedy policy is optimal and no optimal policy
    // intervenes anywhere else
    let bf = brute_force_values(&mg, 2_000_000).unwrap();
    assert!(bf.sup_dist(&vi.v) < 1e-9);
    let branches = bellman_branches(&mg, &vi.v);
    for s in 0..3 {
        for i in 0..2 {
            let (m, n) = branches[s][i];
            if (s, i) == (1, 0) {
                assert!(m > n + 0.1);
            } else {
                assert!(m < n - 1e-3);
            }
        }
    }
}

#[test]
fn greedy_policy_attains_the_fixed_point() {
    for seed in 0..5 {
        let mg = mg_from_seed(300 + seed, 4, 2, 3);
        let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
        let pol = greedy_policy(&mg, &vi.v);
        let mdp = rosa_core::oracle::ops::augmented_mdp(&mg, rosa_core::oracle::ops::RewardParts::Full);
        let flat: Vec<usize> = pol.choice.iter().flat_map(|c| c.iter().map(|&(a, d)| 2 * a + d)).collect();
        let v = mdp.evaluate(&flat);
        for s in 0..mg.n_states {
            for i in 0..2 {
                assert!((v[2 * s + i] - vi.v.v[s][i]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn zero_bonus_fixed_point_is_plain_value_minus_potential() {
    for seed in 0..5 {
        let mg = mg_from_seed(400 + seed, 5, 3, 3);
        let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
        let plain = base_mdp(&mg).solve(1e-12, 100_000).unwrap();
        let psi = mg.aug_potential();
        for s in 0..mg.n_states {
            for i in 0..2 {
                assert!((vi.v.v[s][i] - (plain.v[s] - psi[s][i])).abs() < 1e-8);
                assert_eq!(switch_rule(&mg, &vi.v, s, i), 0);
            }
        }
        assert!(improvement_margin(&mg, &vi.v).unwrap() >= -1e-8);
    }
}

#[test]
fn solve_mdp_chain_walks_to_the_goal() {
    // states 0..4 on a line, action 0 left, action 1 right, reward on entering 4
    let n = 5;
    let mut p = vec![vec![vec![0.0; n]; 2]; n];
    let mut r = vec![vec![0.0; 2]; n];
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        p[s][0][left] = 1.0;
        p[s][1][right] = 1.0;
        if right == n - 1 && s != n - 1 {
            r[s][1] = 1.0;
        }
    }
    let sol = rosa_core::oracle::solve_mdp(&p, &r, 0.9, 1e-12).unwrap();
    assert_eq!(&sol.policy[..n - 1], &[1, 1, 1, 1]);
}

#[test]
fn solve_mdp_matches_enumeration_and_greedy_at_zero_discount() {
    for seed in 0..5 {
        let mg = mg_from_seed(500 + seed, 6, 2, 2);
        let mdp = base_mdp(&mg);
        let sol = mdp.solve(1e-12, 100_000).unwrap();
        let bf = mdp.brute_force(1 << 20).unwrap();
        assert!(sup_dist(&sol.v, &bf) < 1e-8);
        let myopic = FiniteMdp { gamma: 0.0, ..mdp.clone() };
        let sol0 = myopic.solve(1e-12, 100).unwrap();
        for s in 0..6 {
            let best = if mg.r[s][0] >= mg.r[s][1] { 0 } else { 1 };
            assert_eq!(sol0.policy[s], best);
        }
    }
}

#[test]
fn invariance_holds_for_zero_random_and_scaled_potentials() {
    let mut mg = mg_from_seed(600, 5, 3, 3);
    mg.phi.iter_mut().flatten().for_each(|x| *x = 0.0);
    let rep = invariance_check(&mg).unwrap();
    assert!(rep.passed());
    assert_eq!(rep.max_gap(), rep.max_gap().min(1e-12));
    for seed in 0..5 {
        let mg = mg_from_seed(610 + seed, 6, 3, 4);
        let rep = invariance_check(&mg).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.cases.iter().any(|c| c.strategy == "always_on_x100"));
        let on = ShaperStrategy::always_on(&mg, 1.0);
        let strict = rosa_core::oracle::invariance::invariance_check_with(&mg, &[on], 1e-8).unwrap();
        assert!(strict.passed());
    }
}

#[test]
fn q_learning_reaches_the_fixed_point_on_two_states() {
    let mg = mg_from_seed(700, 2, 2, 2);
    let qs = q_star(&mg).unwrap();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ql = q_learning_switch(&mg, 100_000, AlphaSchedule::Harmonic { scale: 1000.0 }, &mut rng).unwrap();
        let err = sup_dist(&ql.q, &qs);
        assert!(err < 0.05, "seed {seed}: error {err}");
    }
}

#[test]
fn zero_step_size_leaves_q_untouched() {
    let mg = mg_from_seed(701, 3, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ql = q_learning_switch(&mg, 1000, AlphaSchedule::Constant { alpha: 0.0 }, &mut rng).unwrap();
    assert!(ql.q.iter().all(|&x| x == 0.0));
    assert_eq!(ql.visits.iter().sum::<u64>(), 1000);
}

#[test]
fn linear_fa_with_indicators_is_tabular() {
    let mg = mg_from_seed(700, 2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fa = linear_fa_q(&mg, &indicator_basis(&mg), 100_000, AlphaSchedule::Harmonic { scale: 1000.0 }, &mut rng).unwrap();
    assert!(sup_dist(&fa.fitted, &fa.q_star) < 0.05);
    assert!(fa.projection_error < 1e-9);
}

#[test]
fn linear_fa_coarse_basis_error_dominates_projection_and_is_scale_free() {
    let mg = mg_from_seed(702, 4, 2, 2);
    // group by (state pair, intervention bit)
    let basis = aggregation_basis(&mg, 4, |s, _i, _a, d| (s / 2) * 2 + d);
    let sched = AlphaSchedule::Harmonic { scale: 1000.0 };
    let fa = linear_fa_q(&mg, &basis, 100_000, sched, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(fa.projection_error > 0.0);
    // the fitted values lie in span(Psi), so no fit beats the weighted projection
    assert!(fa.error >= fa.projection_error - 1e-12);
    assert!((fa.bound - fa.projection_error / (1.0 - mg.gamma * mg.gamma).sqrt()).abs() < 1e-12);
    let scaled: Vec<Vec<f64>> = basis.iter().map(|r| r.iter().map(|x| 10.0 * x).collect()).collect();
    let fa10 = linear_fa_q(&mg, &scaled, 100_000, sched, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(sup_dist(&fa.fitted, &fa10.fitted) < 1e-6);
}

#[test]
fn linear_fa_rejects_dependent_columns() {
    let mg = mg_from_seed(703, 2, 2, 2);
    let basis: Vec<Vec<f64>> = indicator_basis(&mg).into_iter().map(|r| vec![r[0], r[0]]).collect();
    assert!(linear_fa_q(&mg, &basis, 10, AlphaSchedule::Constant { alpha: 0.1 }, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}

#[test]
fn instance_text_roundtrip_preserves_the_solution() {
    let mut mg = mg_from_seed(800, 4, 2, 3);
    mg.bonus = vec![0.0, 0.5, 0.0, 0.25];
    let back = TabularMG::parse(&mg.to_text()).unwrap();
    let a = value_iterate(&mg, 1e-12, 100_000).unwrap();
    let b = value_iterate(&back, 1e-12, 100_000).unwrap();
    assert!(a.v.sup_dist(&b.v) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>(), n in 1usize..8, na in 1usize..4, nk in 2usize..5) {
        let mg = mg_from_seed(seed, n, na, nk);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let (_, violations) = contraction_ratio(&mg, 20, &mut rng);
        prop_assert_eq!(violations, 0);
    }

    #[test]
    fn bellman_operator_is_monotone(seed in any::<u64>(), n in 1usize..7) {
        let mg = mg_from_seed(seed, n, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let v = random_value(n, 5.0, &mut rng);
        let mut w = v.clone();
        for x in w.v.iter_mut().flatten() {
            *x += rand::Rng::random_range(&mut rng, 0.0..2.0);
        }
        let (tv, tw) = (bellman_op(&mg, &v), bellman_op(&mg, &w));
        for (a, b) in tv.v.iter().flatten().zip(tw.v.iter().flatten()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn fixed_point_properties(seed in any::<u64>(), n in 1usize..5, with_bonus in any::<bool>()) {
        let mut mg = mg_from_seed(seed, n, 2, 2);
        if with_bonus {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
            mg.bonus = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..0.5)).collect();
        }
        let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
        prop_assert!(bellman_op(&mg, &vi.v).sup_dist(&vi.v) < 1e-10);
        prop_assert!(switch_rule_mismatches(&mg, &vi.v).is_empty());
        let bf = brute_force_values(&mg, 2_000_000).unwrap();
        prop_assert!(bf.sup_dist(&vi.v) < 1e-8);
        if !with_bonus {
            prop_assert!(improvement_margin(&mg, &vi.v).unwrap() >= -1e-8);
        }
    }

    #[test]
    fn switch_on_implies_intervention_attains_max(seed in any::<u64>(), n in 1usize..6) {
        let mut mg = mg_from_seed(seed, n, 2, 3);
        mg.bonus = (0..n).map(|s| if s % 2 == 0 { 0.3 } else { 0.0 }).collect();
        let vi = value_iterate(&mg, 1e-12, 100_000).unwrap();
        let branches = bellman_branches(&mg, &vi.v);
        for s in 0..n {
            for i in 0..2 {
                if switch_rule(&mg, &vi.v, s, i) == 1 {
                    let (m, c) = branches[s][i];
                    prop_assert!(m > c + TIE_TOL);
                    prop_assert!((m - vi.v.v[s][i]).abs() < 1e-9);
                }
            }
        }
    }
}
