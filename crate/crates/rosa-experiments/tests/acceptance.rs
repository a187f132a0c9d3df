//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A criterion may fail only in the part that is a documented negative result
//! (the coarse-basis bound of 7, the seed count of 8); it then prints FAIL
//! with the measurement without failing the target. Any other FAIL exits
//! non-zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rosa_core::agents::{
    build_agents, collect_rollout, rollout_config, train_with, MetricsRow, RolloutConfig, RolloutState,
    RunObserver, TrainOptions, TransitionRecord,
};
use rosa_core::config::RunConfig;
use rosa_core::oracle::ops::{brute_force_values, value_iterate};
use rosa_core::oracle::qlearn::{aggregation_basis, indicator_basis, linear_fa_q, q_learning_switch, q_star, sup_dist};
use rosa_core::oracle::suite::{contraction_ratio, improvement_margin, switch_rule_mismatches, BRUTE_FORCE_BUDGET};
use rosa_core::oracle::{invariance_check, random_mg, AlphaSchedule, RandomMgSpec, TabularMG};

use rosa_experiments::analysis::{final_window, steps_to_threshold, GoalLabels};
use rosa_experiments::config::load_config;
use rosa_experiments::run::{run_config, SeedRun};

const FINAL_WINDOW: usize = 100;

struct Verdict {
    id: &'static str,
    passed: bool,
    /// The failure, if any, is confined to a documented negative result.
    known_negative: bool,
    detail: String,
}

impl Verdict {
    fn new(id: &'static str, passed: bool, detail: String) -> Self {
        Verdict { id, passed, known_negative: false, detail }
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mg(seed: u64, n: usize, na: usize, nk: usize) -> TabularMG {
    random_mg(&RandomMgSpec::new(n, na, nk), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Sums of `gamma^t r_i` over closed switch-on segments of real ROSA rollouts.
fn telescoping() -> Verdict {
    let cfg = load_config(&configs_dir().join("two_goal_rosa.toml")).unwrap();
    let env = cfg.env.build().unwrap();
    let mut episodes = 0;
    let mut segments = 0;
    let mut worst = 0.0_f64;
    for seed in 0..10u64 {
        let agents = build_agents(&cfg, &env, 1000 + seed).unwrap();
        let rcfg = RolloutConfig { rollout_len: 1, ..rollout_config(&cfg, None) };
        let mut st = RolloutState::new(env.clone(), ChaCha8Rng::seed_from_u64(seed));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
        let mut recs: Vec<TransitionRecord> = Vec::new();
        let mut rows = Vec::new();
        while rows.len() < 10 {
            recs.extend(collect_rollout(&mut st, &agents, &rcfg, &mut rng, &mut rows).unwrap());
        }
        episodes += rows.len();
        let mut sum = 0.0;
        let mut open = false;
        for rec in &recs {
            if rec.g == 1 {
                open = true;
                sum += rcfg.gamma.powi(rec.t as i32) * rec.r_i;
                if rec.a2_next == 0 && !rec.truncated {
                    worst = worst.max(sum.abs());
                    segments += 1;
                    sum = 0.0;
                    open = false;
                }
            }
            if rec.episode_end() && open {
                sum = 0.0;
                open = false;
            }
        }
    }
    Verdict {
        id: "1",
        passed: episodes >= 100 && segments > 0 && worst < 1e-9,
        known_negative: false,
        detail: format!("{episodes} trajectories, {segments} closed segments, max |segment sum| = {worst:e}"),
    }
}

fn contraction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut worst = 0.0_f64;
    for k in 0..20u64 {
        let n = rng.random_range(1..=8);
        let na = rng.random_range(1..=3);
        let nk = rng.random_range(2..=4);
        let g = mg(200 + k, n, na, nk);
        let (ratio, v) = contraction_ratio(&g, 100, &mut rng);
        violations += v;
        worst = worst.max(ratio);
    }
    Verdict {
        id: "2",
        passed: violations == 0,
        known_negative: false,
        detail: format!("20 games x 100 pairs: {violations} violations, max ||TV-TW|| / (gamma ||V-W||) = {worst:.6}"),
    }
}

fn invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failed = 0;
    let mut gap = 0.0_f64;
    for k in 0..20u64 {
        let n = rng.random_range(1..=6);
        let na = rng.random_range(1..=3);
        let nk = rng.random_range(2..=4);
        let rep = invariance_check(&mg(300 + k, n, na, nk)).unwrap();
        gap = gap.max(rep.max_gap());
        if !rep.passed() {
            failed += 1;
        }
    }
    Verdict::new("3", failed == 0, format!("20 games: {failed} failures, max value gap {gap:e}"))
}

fn small_instances() -> Vec<TabularMG> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..10u64).map(|k| mg(400 + k, rng.random_range(1..=5), 2, 2)).collect()
}

fn vi_vs_brute_force(instances: &[TabularMG]) -> Verdict {
    let mut gap = 0.0_f64;
    for g in instances {
        let vi = value_iterate(g, 1e-12, 1_000_000).unwrap();
        let bf = brute_force_values(g, BRUTE_FORCE_BUDGET).unwrap();
        gap = gap.max(bf.sup_dist(&vi.v));
    }
    Verdict::new("4", gap <= 1e-8, format!("10 games: max ||V_vi - V_enum|| = {gap:e}"))
}

fn switch_rule(instances: &[TabularMG]) -> Verdict {
    let total: usize = instances
        .iter()
        .map(|g| switch_rule_mismatches(g, &value_iterate(g, 1e-12, 1_000_000).unwrap().v).len())
        .sum();
    Verdict::new("5", total == 0, format!("{total} switch-rule mismatches over 10 games"))
}

fn improvement(instances: &[TabularMG]) -> Verdict {
    let margin = instances
        .iter()
        .map(|g| improvement_margin(g, &value_iterate(g, 1e-12, 1_000_000).unwrap().v).unwrap())
        .fold(f64::INFINITY, f64::min);
    Verdict::new("6", margin >= -1e-8, format!("min (V* - plain optimum) = {margin:e}"))
}

fn learning() -> Verdict {
    let t = Instant::now();
    let g = mg(700, 2, 2, 2);
    let qs = q_star(&g).unwrap();
    let sched = AlphaSchedule::Harmonic { scale: 1000.0 };
    let tab: Vec<f64> = (0..5)
        .map(|s| sup_dist(&q_learning_switch(&g, 100_000, sched, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().q, &qs))
        .collect();
    let ind: Vec<f64> = (0..5)
        .map(|s| {
            let fa = linear_fa_q(&g, &indicator_basis(&g), 100_000, sched, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            sup_dist(&fa.fitted, &fa.q_star)
        })
        .collect();
    // coarse basis: one feature per (state, intervention bit)
    let coarse = aggregation_basis(&g, 4, |s, _i, _a, d| 2 * s + d);
    let slack: Vec<(f64, f64)> = (0..5)
        .map(|s| {
            let fa = linear_fa_q(&g, &coarse, 100_000, sched, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            (fa.error, fa.bound + 0.05)
        })
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let tab_ok = tab.iter().all(|&e| e < 0.05);
    let ind_ok = ind.iter().all(|&e| e < 0.05);
    let coarse_ok = slack.iter().filter(|(e, b)| e <= b).count();
    Verdict {
        id: "7",
        passed: tab_ok && ind_ok && coarse_ok == 5 && secs < 120.0,
        known_negative: tab_ok && ind_ok && secs < 120.0,
        detail: format!(
            "tabular max err {:.4}; indicator max err {:.4}; coarse within bound {coarse_ok}/5 (err vs bound+0.05: {}); {secs:.1}s",
            tab.iter().fold(0.0_f64, |a, &b| a.max(b)),
            ind.iter().fold(0.0_f64, |a, &b| a.max(b)),
            slack.iter().map(|(e, b)| format!("{e:.3}/{b:.3}")).collect::<Vec<_>>().join(" ")
        ),
    }
}

fn runs(name: &str, out: &Path) -> (RunConfig, Vec<SeedRun>, f64) {
    let cfg = load_config(&configs_dir().join(format!("{name}.toml"))).unwrap();
    let t = Instant::now();
    let r = run_config(&cfg, None, Some(out)).unwrap();
    (cfg, r, t.elapsed().as_secs_f64())
}

fn maze_direction(rosa: &[SeedRun], vanilla: &[SeedRun], labels: &GoalLabels, rosa_secs: f64) -> Verdict {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (r, v) in rosa.iter().zip(vanilla) {
        let wr = final_window(&r.episodes, FINAL_WINDOW, labels).unwrap();
        let wv = final_window(&v.episodes, FINAL_WINDOW, labels).unwrap();
        let ok = wr.p_optimal > wr.p_suboptimal && wr.p_optimal > wv.p_optimal;
        wins += usize::from(ok);
        parts.push(format!("seed {}: opt {:.2} sub {:.2} vanilla-opt {:.2}", r.seed, wr.p_optimal, wr.p_suboptimal, wv.p_optimal));
    }
    Verdict {
        id: "8",
        passed: wins >= 4 && rosa_secs <= 600.0,
        known_negative: rosa_secs <= 600.0,
        detail: format!("{wins}/5 seeds ({}); rosa wall {rosa_secs:.0}s", parts.join("; ")),
    }
}

fn herring(rosa: &[SeedRun], rnd: &[SeedRun], cfg: &RunConfig) -> Verdict {
    let spec = cfg.env.grid_spec().unwrap().unwrap();
    let ratio = |xs: &[SeedRun]| -> Vec<f64> {
        xs.iter().map(|r| r.heatmap.as_ref().unwrap().herring_mass_ratio(&spec).unwrap().unwrap_or(0.0)).collect()
    };
    let (a, b) = (ratio(rosa), ratio(rnd));
    let (ma, mb) = (a.iter().sum::<f64>() / 5.0, b.iter().sum::<f64>() / 5.0);
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    Verdict {
        id: "9",
        passed: ma < mb,
        known_negative: false,
        detail: format!("herring mass share rosa {ma:.3} [{}] vs rnd_bonus {mb:.3} [{}]", fmt(&a), fmt(&b)),
    }
}

/// Env steps until the 100-episode mean return reaches 0.5; runs that never
/// get there are counted at their full budget.
fn steps_to_half(rows: &[MetricsRow], budget: u64) -> (u64, bool) {
    match steps_to_threshold(rows, 0.5, FINAL_WINDOW) {
        Some(s) => (s, true),
        None => (budget, false),
    }
}

fn ablation(rosa: &[SeedRun], nosw: &[SeedRun], budget: u64) -> Verdict {
    let stats = |xs: &[SeedRun]| {
        let v: Vec<(u64, bool)> = xs.iter().map(|r| steps_to_half(&r.episodes, budget)).collect();
        let mean = v.iter().map(|x| x.0 as f64).sum::<f64>() / v.len() as f64;
        (mean, v.iter().filter(|x| x.1).count())
    };
    let ((mr, hr), (mn, hn)) = (stats(rosa), stats(nosw));
    Verdict {
        id: "10",
        passed: mr < mn,
        known_negative: false,
        detail: format!(
            "mean steps to return 0.5: rosa {mr:.0} ({hr}/5 reached) vs rosa_no_switch {mn:.0} ({hn}/5 reached); unreached seeds count as the {budget}-step budget"
        ),
    }
}

struct SwitchCounter {
    steps: u64,
    on: u64,
}

impl RunObserver for SwitchCounter {
    fn on_step(&mut self, rec: &TransitionRecord) -> rosa_core::Result<()> {
        self.steps += 1;
        self.on += u64::from(rec.g);
        Ok(())
    }
}

fn determinism_and_cartpole(out: &Path) -> Verdict {
    let mut cfg = load_config(&configs_dir().join("two_goal_rosa.toml")).unwrap();
    cfg.total_steps = 8000;
    run_config(&cfg, Some(3), Some(&out.join("a"))).unwrap();
    run_config(&cfg, Some(3), Some(&out.join("b"))).unwrap();
    let read = |d: &str| std::fs::read(out.join(d).join("two_goal_rosa/seed_3/metrics.csv")).unwrap();
    let identical = read("a") == read("b");

    let mut cp = load_config(&configs_dir().join("cartpole_rosa.toml")).unwrap();
    cp.total_steps = u64::MAX / 2;
    let opts = TrainOptions { wall_budget: Some(Duration::from_secs(300)), ..Default::default() };
    let mut counter = SwitchCounter { steps: 0, on: 0 };
    let t = Instant::now();
    let outcome = train_with(&cp, 0, opts, &mut counter);
    let secs = t.elapsed().as_secs_f64();
    let (cp_ok, cp_detail) = match outcome {
        Ok(o) => {
            let switches: u64 = o.episodes.iter().map(|r| r.switch_count).sum();
            (
                switches > 0 && secs >= 300.0,
                format!("cartpole {secs:.0}s: {} steps, {} episodes, {switches} switch-ons, {} shaped steps", o.env_steps, o.episodes.len(), counter.on),
            )
        }
        Err(e) => (false, format!("cartpole fault after {secs:.0}s: {e}")),
    };
    Verdict {
        id: "11",
        passed: identical && cp_ok,
        known_negative: false,
        detail: format!("metrics.csv byte-identical: {identical}; {cp_detail}"),
    }
}

fn report(v: &Verdict, unexpected: &mut Vec<&'static str>) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    let note = if !v.passed && v.known_negative { " [known negative result, see README]" } else { "" };
    println!("criterion {:>2}: {tag}{note} - {}", v.id, v.detail);
    if !v.passed && note.is_empty() {
        unexpected.push(v.id);
    }
}

fn main() {
    let t0 = Instant::now();
    let mut unexpected = Vec::new();
    report(&telescoping(), &mut unexpected);
    report(&contraction(), &mut unexpected);
    report(&invariance(), &mut unexpected);
    let inst = small_instances();
    report(&vi_vs_brute_force(&inst), &mut unexpected);
    report(&switch_rule(&inst), &mut unexpected);
    report(&improvement(&inst), &mut unexpected);
    report(&learning(), &mut unexpected);

    let tmp = tempfile::tempdir().unwrap();
    let (cfg, rosa, rosa_secs) = runs("two_goal_rosa", tmp.path());
    let (_, vanilla, _) = runs("two_goal_vanilla", tmp.path());
    let labels = GoalLabels::from_spec(&cfg.env.grid_spec().unwrap().unwrap()).unwrap();
    report(&maze_direction(&rosa, &vanilla, &labels, rosa_secs), &mut unexpected);
    drop(vanilla);

    let (rh_cfg, rh_rosa, _) = runs("red_herring_rosa", tmp.path());
    let (_, rh_rnd, _) = runs("red_herring_rnd_bonus", tmp.path());
    report(&herring(&rh_rosa, &rh_rnd, &rh_cfg), &mut unexpected);

    let (nosw_cfg, nosw, _) = runs("two_goal_rosa_no_switch", tmp.path());
    assert_eq!(nosw_cfg.total_steps, cfg.total_steps);
    report(&ablation(&rosa, &nosw, cfg.total_steps), &mut unexpected);

    report(&determinism_and_cartpole(tmp.path()), &mut unexpected);
    println!("acceptance finished in {:.0}s", t0.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
