use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RosaError};
use crate::nn::{log_softmax, softmax, Adam, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadRole {
    Controller,
    /// Two logits: off, on.
    Switch,
    /// `m` logits for shaper actions `1..=m`.
    Magnitude,
}

impl HeadRole {
    pub fn name(self) -> &'static str {
        match self {
            HeadRole::Controller => "controller",
            HeadRole::Switch => "switch",
            HeadRole::Magnitude => "magnitude",
        }
    }
}

/// A categorical policy with its own value network.
#[derive(Debug, Clone)]
pub struct PolicyHead {
    pub role: HeadRole,
    pub net: Mlp,
    pub value_net: Mlp,
    pub(crate) opt_pi: Adam,
    pub(crate) opt_v: Adam,
}

impl PolicyHead {
    pub fn new<R: Rng + ?Sized>(
        role: HeadRole,
        obs_dim: usize,
        n_out: usize,
        hidden: &[usize],
        lr: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if role == HeadRole::Switch && n_out != 2 {
            return Err(RosaError::Usage("switch head has exactly two logits".into()));
        }
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(n_out);
        let mut net = Mlp::new(&dims, rng)?;
        // start close to uniform
        net.scale_output_layer(0.01);
        *dims.last_mut().unwrap() = 1;
        let value_net = Mlp::new(&dims, rng)?;
        let opt_pi = Adam::new(&net, lr);
        let opt_v = Adam::new(&value_net, lr);
        Ok(PolicyHead { role, net, value_net, opt_pi, opt_v })
    }

    pub fn n_actions(&self) -> usize {
        self.net.output_dim()
    }

    pub fn logits(&self, s: &[f64]) -> Vec<f64> {
        self.net.forward(s)
    }

    pub fn probs(&self, s: &[f64]) -> Vec<f64> {
        softmax(&self.logits(s))
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        self.value_net.forward(s)[0]
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.opt_pi.lr = lr;
        self.opt_v.lr = lr;
    }
}

/// Draw from `softmax(logits)` by inverse CDF. Returns `(index, log-probability)`.
pub fn sample_logits<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(RosaError::Numerical(format!("non-finite logits {logits:?}")));
    }
    let lp = log_softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in lp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return Ok((i, *l));
        }
    }
    let last = lp.len() - 1;
    Ok((last, lp[last]))
}

/// Sample an action from `head` at `s`.
pub fn act<R: Rng + ?Sized>(head: &PolicyHead, s: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    let logits = head.logits(s);
    sample_logits(&logits, rng).map_err(|e| {
        RosaError::Numerical(format!(
            "{} head: {e}; observation {s:?}; parameter hash {:016x}",
            head.role.name(),
            head.net.weight_hash()
        ))
    })
}
