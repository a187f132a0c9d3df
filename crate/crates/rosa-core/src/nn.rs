//! Small dense networks with hand-derived gradients.
//!
//! Every network in the system is a multilayer perceptron of at most a few
//! thousand parameters evaluated one sample at a time, so plain row-major
//! buffers are enough. Evaluation order is fixed, which keeps every run
//! bit-reproducible.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};

use crate::error::{usage, Result, RosaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Multilayer perceptron: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[i]` the (post-rectifier) output of layer `i-1`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl Mlp {
    /// Uniform fan-in initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return usage(format!("bad layer dims {dims:?}"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let mut layer = Layer::zeros(n_in, n_out);
            for w in layer.w.iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        Ok(Mlp { dims: dims.to_vec(), layers })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Multiply the output layer by `factor`. Policies start near-uniform this way.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().unwrap();
        last.w.iter_mut().for_each(|w| *w *= factor);
        last.b.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.n_out);
            layer.apply(acts.last().unwrap(), &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        Trace { acts }
    }

    /// Accumulate `d loss / d params` into `grads` given `d loss / d output`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut Grads) {
        let mut delta = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.acts[li];
            let g = &mut grads.layers[li];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            // rectifier derivative, taken from the stored post-activation
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn zero_grads(&self) -> Grads {
        Grads { layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect() }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return usage(format!("expected {} parameters, got {}", self.n_params(), flat.len()));
        }
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[i..i + nb]);
            i += nb;
        }
        Ok(())
    }

    /// Little-endian f64 blob of [`Mlp::flat_params`].
    pub fn to_bytes(&self) -> Vec<u8> {
        self.flat_params().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(dims: &[usize], bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(RosaError::Parse("weight blob length is not a multiple of 8".into()));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut net = Mlp {
            dims: dims.to_vec(),
            layers: dims.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect(),
        };
        net.set_flat_params(&flat)?;
        Ok(net)
    }

    /// Hash of the exact parameter bits.
    pub fn weight_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.dims.hash(&mut h);
        for v in self.flat_params() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    pub fn any_nan(&self) -> bool {
        self.layers.iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite()))
    }
}

/// Gradient buffers with the same shape as an [`Mlp`].
#[derive(Debug, Clone)]
pub struct Grads {
    layers: Vec<Layer>,
}

impl Grads {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v *= k);
            l.b.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.w.iter().chain(&l.b).map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn any_nan(&self) -> bool {
        self.layers.iter().any(|l| l.w.iter().chain(&l.b).any(|v| !v.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }
}

/// Scale a group of gradient buffers so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(groups: &mut [&mut Grads], max_norm: f64) -> f64 {
    let norm = groups.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in groups.iter_mut() {
            g.scale(k);
        }
    }
    norm
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let n = net.n_params();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Descend along `grads` (which hold d loss / d params).
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        if self.lr == 0.0 {
            return;
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, gv) in layer.w.iter_mut().chain(layer.b.iter_mut()).zip(g.w.iter().chain(&g.b)) {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gv;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gv * gv;
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_grad(net: &Mlp, x: &[f64], w: &[f64]) -> Vec<f64> {
        let loss = |n: &Mlp| n.forward(x).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let base = net.flat_params();
        let mut out = Vec::new();
        for i in 0..base.len() {
            let mut p = base.clone();
            let h = 1e-6;
            p[i] += h;
            let mut a = net.clone();
            a.set_flat_params(&p).unwrap();
            p[i] -= 2.0 * h;
            let mut b = net.clone();
            b.set_flat_params(&p).unwrap();
            out.push((loss(&a) - loss(&b)) / (2.0 * h));
        }
        out
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 5, 4, 2], &mut rng).unwrap();
        let x = [0.3, -1.2, 0.7];
        let w = [0.5, -2.0];
        let trace = net.forward_trace(&x);
        let mut g = net.zero_grads();
        net.backward(&trace, &w, &mut g);
        let num = numeric_grad(&net, &x, &w);
        for (a, b) in g.flat().iter().zip(&num) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 6, 3], &mut rng).unwrap();
        let back = Mlp::from_bytes(&net.dims, &net.to_bytes()).unwrap();
        assert_eq!(net, back);
        assert_eq!(net.weight_hash(), back.weight_hash());
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Mlp::new(&[1, 1], &mut rng).unwrap();
        let mut opt = Adam::new(&net, 0.05);
        for _ in 0..500 {
            let tr = net.forward_trace(&[1.0]);
            let y = tr.output()[0];
            let mut g = net.zero_grads();
            net.backward(&tr, &[2.0 * (y - 3.0)], &mut g);
            opt.step(&mut net, &g);
        }
        assert!((net.forward(&[1.0])[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
