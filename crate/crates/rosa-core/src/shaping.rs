//! Potential-based shaping with a frozen random feature map.
//!
//! The potential is `phi(s, a2) = f(s) . onehot(a2)` where `onehot(0)` is the
//! zero vector, so the null action always has zero potential.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result, RosaError};
use crate::nn::Mlp;

/// Index into `{0, 1, ..., m}`; 0 is the null action.
pub type ShaperAction = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `gamma * phi(s', a2') - phi(s, a2)`.
    #[default]
    Forward,
    /// `phi(s', a2') - phi(s, a2) / gamma`; equal to the forward form divided by gamma.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingParams {
    pub gamma: f64,
    pub m: usize,
    #[serde(default)]
    pub direction: Direction,
}

impl ShapingParams {
    pub fn new(gamma: f64, m: usize) -> Result<Self> {
        let p = ShapingParams { gamma, m, direction: Direction::Forward };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return usage(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.m == 0 {
            return usage("m must be at least 1");
        }
        Ok(())
    }
}

/// JSON header stored next to the weight blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub dims: Vec<usize>,
    pub seed: u64,
    pub weight_hash: u64,
}

/// The frozen map `f: R^d -> R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialNet {
    net: Mlp,
    seed: u64,
}

impl PotentialNet {
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PotentialNet { net: Mlp::new(dims, &mut rng)?, seed })
    }

    /// Wrap a hand-built network.
    pub fn from_mlp(net: Mlp) -> Self {
        PotentialNet { net, seed: 0 }
    }

    pub fn m(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn features(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.input_dim() {
            return usage(format!("observation has dim {}, potential net expects {}", s.len(), self.input_dim()));
        }
        Ok(self.net.forward(s))
    }

    pub fn phi(&self, s: &[f64], a2: ShaperAction) -> Result<f64> {
        if a2 > self.m() {
            return usage(format!("shaper action {a2} out of range 0..={}", self.m()));
        }
        let f = self.features(s)?;
        Ok(if a2 == 0 { 0.0 } else { f[a2 - 1] })
    }

    pub fn header(&self) -> NetHeader {
        NetHeader { dims: self.net.dims.clone(), seed: self.seed, weight_hash: self.net.weight_hash() }
    }

    pub fn weight_hash(&self) -> u64 {
        self.net.weight_hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.net.to_bytes()
    }

    pub fn from_parts(header: &NetHeader, blob: &[u8]) -> Result<Self> {
        let net = Mlp::from_bytes(&header.dims, blob)?;
        if net.weight_hash() != header.weight_hash {
            return Err(RosaError::Parse("potential weights do not match the header hash".into()));
        }
        Ok(PotentialNet { net, seed: header.seed })
    }
}

/// Shaping reward for one transition; `s_next = None` marks a terminal successor, whose potential is 0.
pub fn shaping_reward(
    net: &PotentialNet,
    s: &[f64],
    a2: ShaperAction,
    s_next: Option<&[f64]>,
    a2_next: ShaperAction,
    gamma: f64,
) -> Result<f64> {
    shaping_reward_with(net, s, a2, s_next, a2_next, gamma, Direction::Forward)
}

pub fn shaping_reward_with(
    net: &PotentialNet,
    s: &[f64],
    a2: ShaperAction,
    s_next: Option<&[f64]>,
    a2_next: ShaperAction,
    gamma: f64,
    direction: Direction,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return usage(format!("gamma must lie in [0, 1], got {gamma}"));
    }
    let here = net.phi(s, a2)?;
    let next = match s_next {
        Some(sn) => net.phi(sn, a2_next)?,
        None => 0.0,
    };
    Ok(match direction {
        Direction::Forward => gamma * next - here,
        Direction::Backward => next - here / gamma,
    })
}

/// One step of a switching segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStep {
    pub t: usize,
    pub s: Vec<f64>,
    pub a2: ShaperAction,
    pub on: bool,
}

/// `sum_t gamma^t F_t` over consecutive steps, without checking the switching convention.
pub fn discounted_shaping_sum(steps: &[SegmentStep], net: &PotentialNet, gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    for pair in steps.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.t != cur.t + 1 {
            return usage(format!("segment times are not consecutive at t={}", cur.t));
        }
        let f = shaping_reward(net, &cur.s, cur.a2, Some(&next.s), next.a2, gamma)?;
        total += gamma.powi(cur.t as i32) * f;
    }
    Ok(total)
}

/// Discounted shaping over a maximal on-segment `[t_on, t_off]` whose boundary
/// actions are null. Such a sum is zero up to rounding.
pub fn segment_shaping_sum(steps: &[SegmentStep], net: &PotentialNet, gamma: f64) -> Result<f64> {
    if steps.len() < 2 {
        return usage("a segment needs at least its two boundary steps");
    }
    let (first, last) = (&steps[0], &steps[steps.len() - 1]);
    if first.a2 != 0 || last.a2 != 0 {
        return Err(RosaError::Contract(format!(
            "segment boundary actions must be null, found a2={} at t={} and a2={} at t={}",
            first.a2, first.t, last.a2, last.t
        )));
    }
    if let Some(bad) = steps[1..steps.len() - 1].iter().find(|s| !s.on) {
        return Err(RosaError::Contract(format!("switch is off inside the segment at t={}", bad.t)));
    }
    discounted_shaping_sum(steps, net, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    /// f(s) = s for a 3-dimensional input.
    fn identity_net() -> PotentialNet {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        PotentialNet::from_mlp(Mlp {
            dims: vec![3, 3],
            layers: vec![Layer { n_in: 3, n_out: 3, w, b: vec![0.0; 3] }],
        })
    }

    #[test]
    fn phi_reads_feature_entry() {
        let net = identity_net();
        let s = [0.25, -1.5, 4.0];
        assert_eq!(net.phi(&s, 0).unwrap(), 0.0);
        assert_eq!(net.phi(&s, 1).unwrap(), 0.25);
        assert_eq!(net.phi(&s, 2).unwrap(), -1.5);
        assert_eq!(net.phi(&s, 3).unwrap(), 4.0);
        assert!(net.phi(&s, 4).is_err());
        assert!(net.phi(&[1.0], 1).is_err());
    }

    #[test]
    fn shaping_reward_hand_value() {
        let net = identity_net();
        let s = [0.25, -1.5, 4.0];
        let sn = [2.0, 0.5, -1.0];
        // 0.95 * sn[2] - s[0] = -0.95 - 0.25
        let r = shaping_reward(&net, &s, 1, Some(&sn), 3, 0.95).unwrap();
        assert!((r - (-1.2)).abs() < 1e-15);
        assert_eq!(shaping_reward(&net, &s, 0, Some(&sn), 0, 0.95).unwrap(), 0.0);
        assert_eq!(shaping_reward(&net, &s, 2, Some(&s), 2, 1.0).unwrap(), 0.0);
        // terminal successor carries no potential
        assert_eq!(shaping_reward(&net, &s, 3, None, 1, 0.9).unwrap(), -4.0);
    }
}
