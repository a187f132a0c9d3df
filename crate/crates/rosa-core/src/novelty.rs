//! Novelty bonuses: random network distillation and a capped visit count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{usage, Result};
use crate::nn::{Adam, Mlp};

/// Frozen random target `h` and a trained predictor `h_hat`.
#[derive(Debug, Clone)]
pub struct NoveltyModel {
    target: Mlp,
    predictor: Mlp,
    opt: Adam,
}

impl NoveltyModel {
    /// Target and predictor share the layer sizes but are initialised independently.
    pub fn new(dims: &[usize], seed: u64, lr: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = Mlp::new(dims, &mut rng)?;
        let predictor = Mlp::new(dims, &mut rng)?;
        let opt = Adam::new(&predictor, lr);
        Ok(NoveltyModel { target, predictor, opt })
    }

    pub fn k(&self) -> usize {
        self.target.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn set_predictor(&mut self, p: Mlp) -> Result<()> {
        if p.dims != self.predictor.dims {
            return usage("predictor dims mismatch");
        }
        self.opt = Adam::new(&p, self.opt.lr);
        self.predictor = p;
        Ok(())
    }

    /// Make the predictor an exact copy of the target, so every bonus is zero.
    pub fn copy_target_into_predictor(&mut self) {
        self.predictor = self.target.clone();
        self.opt = Adam::new(&self.predictor, self.opt.lr);
    }

    /// `||h_hat(s) - h(s)||^2`.
    pub fn bonus(&self, s: &[f64]) -> f64 {
        let p = self.predictor.forward(s);
        let t = self.target.forward(s);
        p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn delta_bonus(&self, s_t: &[f64], s_prev: &[f64]) -> f64 {
        self.bonus(s_t) - self.bonus(s_prev)
    }

    /// One Adam step on the mean squared distillation loss. Returns the loss before the step.
    pub fn train_predictor(&mut self, batch: &[Vec<f64>], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return usage("train_predictor needs a non-empty batch");
        }
        let mut grads = self.predictor.zero_grads();
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for s in batch {
            let trace = self.predictor.forward_trace(s);
            let t = self.target.forward(s);
            let d: Vec<f64> = trace.output().iter().zip(&t).map(|(p, q)| 2.0 * (p - q) / n).collect();
            loss += trace.output().iter().zip(&t).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            self.predictor.backward(&trace, &d, &mut grads);
        }
        self.opt.lr = lr;
        self.opt.step(&mut self.predictor, &grads);
        Ok(loss / n)
    }
}

/// Visit counts with bonus `beta / sqrt(n + 1)`, zero once `n >= cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: BTreeMap<u64, u64>,
    pub beta: f64,
    pub cap: Option<u64>,
}

impl CountTable {
    pub fn new(beta: f64, cap: Option<u64>) -> Self {
        CountTable { counts: BTreeMap::new(), beta, cap }
    }

    pub fn visit(&mut self, s: u64) {
        *self.counts.entry(s).or_insert(0) += 1;
    }

    pub fn count(&self, s: u64) -> u64 {
        self.counts.get(&s).copied().unwrap_or(0)
    }

    pub fn count_bonus(&self, s: u64) -> f64 {
        let n = self.count(s);
        if self.cap.is_some_and(|m| n >= m) {
            return 0.0;
        }
        self.beta / ((n + 1) as f64).sqrt()
    }
}
