use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rosa_core::nn::{Layer, Mlp};
use rosa_core::shaping::{
    discounted_shaping_sum, segment_shaping_sum, shaping_reward, shaping_reward_with, Direction, PotentialNet,
    SegmentStep, ShapingParams,
};

fn random_obs(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()
}

/// A random segment `[t_on, t_off]` with null boundary actions and active interior.
fn random_segment(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<SegmentStep> {
    let t_on = rng.random_range(0..30);
    let len = rng.random_range(2..25);
    (0..len)
        .map(|k| {
            let boundary = k == 0 || k + 1 == len;
            SegmentStep {
                t: t_on + k,
                s: random_obs(rng, d),
                a2: if boundary { 0 } else { rng.random_range(1..=m) },
                on: !boundary || k == 0,
            }
        })
        .collect()
}

#[test]
fn hand_built_net_gives_known_potentials() {
    // f(s) = (s0 + s1, 2 s1 - 1), one linear layer
    let net = PotentialNet::from_mlp(Mlp {
        dims: vec![2, 2],
        layers: vec![Layer { n_in: 2, n_out: 2, w: vec![1.0, 1.0, 0.0, 2.0], b: vec![0.0, -1.0] }],
    });
    let s = [0.5, 2.0];
    let sn = [-1.0, 0.25];
    assert_eq!(net.phi(&s, 1).unwrap(), 2.5);
    assert_eq!(net.phi(&s, 2).unwrap(), 3.0);
    assert_eq!(net.phi(&sn, 2).unwrap(), -0.5);
    // 0.95 * (-0.5) - 2.5
    let r = shaping_reward(&net, &s, 1, Some(&sn), 2, 0.95).unwrap();
    assert!((r - (-2.975)).abs() < 1e-15);
    assert_eq!(shaping_reward(&net, &s, 0, Some(&sn), 0, 0.95).unwrap(), 0.0);
}

#[test]
fn null_action_has_zero_potential_everywhere() {
    let net = PotentialNet::new(&[6, 64, 64, 8], 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        assert_eq!(net.phi(&random_obs(&mut rng, 6), 0).unwrap(), 0.0);
    }
}

#[test]
fn repeated_calls_are_bit_identical() {
    let net = PotentialNet::new(&[3, 4, 2], 5).unwrap();
    let s = [0.3, -0.7, 1.1];
    let first = net.phi(&s, 2).unwrap().to_bits();
    let hash = net.weight_hash();
    for _ in 0..1_000_000 {
        assert_eq!(net.phi(&s, 2).unwrap().to_bits(), first);
    }
    assert_eq!(net.weight_hash(), hash);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let net = PotentialNet::new(&[3, 8, 2], 1).unwrap();
    assert!(net.phi(&[1.0, 2.0], 1).is_err());
    assert!(net.phi(&[1.0, 2.0, 3.0], 3).is_err());
    assert!(shaping_reward(&net, &[1.0, 2.0, 3.0], 1, Some(&[1.0]), 1, 0.9).is_err());
}

#[test]
fn params_reject_a_discount_of_one() {
    assert!(ShapingParams::new(1.0, 8).is_err());
    assert!(ShapingParams::new(0.99, 0).is_err());
    assert_eq!(ShapingParams::new(0.99, 8).unwrap().direction, Direction::Forward);
}

#[test]
fn serialized_weights_roundtrip_and_detect_tampering() {
    let net = PotentialNet::new(&[4, 16, 3], 9).unwrap();
    let header = net.header();
    let blob = net.to_bytes();
    let back = PotentialNet::from_parts(&header, &blob).unwrap();
    assert_eq!(back, net);
    let mut bad = blob.clone();
    bad[9] ^= 1;
    assert!(PotentialNet::from_parts(&header, &bad).is_err());
}

#[test]
fn single_step_segment_is_zero() {
    let net = PotentialNet::new(&[3, 8, 4], 2).unwrap();
    let steps = vec![
        SegmentStep { t: 4, s: vec![0.1, 0.2, 0.3], a2: 0, on: true },
        SegmentStep { t: 5, s: vec![-1.0, 0.0, 2.0], a2: 0, on: false },
    ];
    assert_eq!(segment_shaping_sum(&steps, &net, 0.9).unwrap(), 0.0);
}

#[test]
fn non_null_boundaries_leave_the_boundary_residual() {
    let net = PotentialNet::new(&[3, 16, 4], 3).unwrap();
    let gamma = 0.93;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let mut steps = random_segment(&mut rng, 3, 4);
        let n = steps.len();
        steps[0].a2 = rng.random_range(1..=4);
        steps[n - 1].a2 = rng.random_range(1..=4);
        assert!(segment_shaping_sum(&steps, &net, gamma).is_err());
        let direct = discounted_shaping_sum(&steps, &net, gamma).unwrap();
        let (first, last) = (&steps[0], &steps[n - 1]);
        let residual = gamma.powi(last.t as i32) * net.phi(&last.s, last.a2).unwrap()
            - gamma.powi(first.t as i32) * net.phi(&first.s, first.a2).unwrap();
        assert!((direct - residual).abs() < 1e-9, "{direct} vs {residual}");
    }
}

#[test]
fn switched_off_interior_is_a_contract_violation() {
    let net = PotentialNet::new(&[3, 8, 4], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut steps = random_segment(&mut rng, 3, 4);
    while steps.len() < 4 {
        steps = random_segment(&mut rng, 3, 4);
    }
    steps[1].on = false;
    assert!(segment_shaping_sum(&steps, &net, 0.9).is_err());
}

#[test]
fn non_consecutive_times_are_rejected() {
    let net = PotentialNet::new(&[3, 8, 4], 2).unwrap();
    let steps = vec![
        SegmentStep { t: 0, s: vec![0.0; 3], a2: 0, on: true },
        SegmentStep { t: 2, s: vec![0.0; 3], a2: 0, on: false },
    ];
    assert!(discounted_shaping_sum(&steps, &net, 0.9).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn segments_with_null_boundaries_telescope_to_zero(seed in any::<u64>(), gamma in 0.5f64..0.999) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(2..10);
        let m = rng.random_range(1..9);
        let net = PotentialNet::new(&[d, 32, 32, m], seed ^ 0x55).unwrap();
        let steps = random_segment(&mut rng, d, m);
        prop_assert!(segment_shaping_sum(&steps, &net, gamma).unwrap().abs() < 1e-9);
    }

    #[test]
    fn forward_form_is_gamma_times_backward_form(seed in any::<u64>(), gamma in 0.05f64..0.999) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = PotentialNet::new(&[4, 16, 5], seed).unwrap();
        let (s, sn) = (random_obs(&mut rng, 4), random_obs(&mut rng, 4));
        let (a, an) = (rng.random_range(0..=5), rng.random_range(0..=5));
        let fwd = shaping_reward_with(&net, &s, a, Some(&sn), an, gamma, Direction::Forward).unwrap();
        let bwd = shaping_reward_with(&net, &s, a, Some(&sn), an, gamma, Direction::Backward).unwrap();
        prop_assert!((fwd - gamma * bwd).abs() <= 1e-12 * (1.0 + fwd.abs()));
    }

    #[test]
    fn potential_is_a_pure_function_of_weights(seed in any::<u64>()) {
        let a = PotentialNet::new(&[3, 8, 4], seed).unwrap();
        let b = PotentialNet::new(&[3, 8, 4], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_obs(&mut rng, 3);
        for k in 0..=4 {
            prop_assert_eq!(a.phi(&s, k).unwrap().to_bits(), b.phi(&s, k).unwrap().to_bits());
        }
    }
}
