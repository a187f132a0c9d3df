use serde::{Deserialize, Serialize};

pub const OBS_CLIP: f64 = 5.0;
pub const REWARD_CLIP: f64 = 1.0;

/// Running per-coordinate mean and variance (parallel-merge form of Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        RunningMeanStd { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0 }
    }

    pub fn update(&mut self, x: &[f64]) {
        let n = self.count + 1.0;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            let mean = self.mean[i] + delta / n;
            // M2-style update folded into a population variance
            let m2 = self.var[i] * self.count + delta * (x[i] - mean);
            self.mean[i] = mean;
            self.var[i] = m2 / n;
        }
        self.count = n;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s2))| ((v - m) / (s2 + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

/// Scalar running variance, used to scale reward-like signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningScalar {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningScalar {
    fn default() -> Self {
        RunningScalar { mean: 0.0, var: 1.0, count: 0.0 }
    }
}

impl RunningScalar {
    pub fn update(&mut self, x: f64) {
        let n = self.count + 1.0;
        let delta = x - self.mean;
        let mean = self.mean + delta / n;
        self.var = (self.var * self.count + delta * (x - mean)) / n;
        self.mean = mean;
        self.count = n;
    }

    pub fn std(&self) -> f64 {
        (self.var + 1e-8).sqrt()
    }
}

/// Observation standardisation followed by clipping to `[-5, 5]`.
///
/// For the first `warmup` observations only the clip is applied while the
/// statistics accumulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub stats: RunningMeanStd,
    pub warmup: u64,
    pub frozen: bool,
}

impl ObsNormalizer {
    pub fn new(dim: usize, warmup: u64) -> Self {
        ObsNormalizer { stats: RunningMeanStd::new(dim), warmup, frozen: false }
    }

    pub fn process(&mut self, x: &[f64]) -> Vec<f64> {
        if !self.frozen {
            self.stats.update(x);
        }
        if (self.stats.count as u64) <= self.warmup {
            x.iter().map(|v| v.clamp(-OBS_CLIP, OBS_CLIP)).collect()
        } else {
            self.stats.normalize(x)
        }
    }
}

pub fn clip_reward(r: f64) -> f64 {
    r.clamp(-REWARD_CLIP, REWARD_CLIP)
}
