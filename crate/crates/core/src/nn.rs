//! Small fully connected networks with hand-written reverse-mode gradients.
//!
//! Hidden layers use `tanh`; the output layer is linear. Parameters live in a
//! single flat `Vec<f64>` so optimizers and checkpoints stay trivial. Layout,
//! per layer in order: weight matrix `[out x in]` row-major, then bias `[out]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer outputs recorded by [`Mlp::forward_cached`]; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least input layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Xavier-uniform weights, zero biases. The output layer weights are
    /// additionally multiplied by `output_scale`.
    pub fn new(sizes: &[usize], output_scale: f64, rng: &mut SimRng) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output layer");
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound) * scale);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == param_count(sizes))
            .then(|| Mlp { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Mutable view of the output layer bias.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let out = self.output_dim();
        let n = self.params.len();
        &mut self.params[n - out..]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = input.to_vec();
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            acts = self.layer(offset, n_in, n_out, &acts, l + 1 < n_layers);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward_cached(&self, input: &[f64]) -> Activations {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let next = self.layer(offset, n_in, n_out, &layers[l], l + 1 < n_layers);
            layers.push(next);
            offset += n_in * n_out + n_out;
        }
        Activations { layers }
    }

    fn layer(&self, offset: usize, n_in: usize, n_out: usize, x: &[f64], hidden: bool) -> Vec<f64> {
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, acts: &Activations, grad_out: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(grad_out.len(), self.output_dim());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        // delta holds d loss / d pre-activation of the current layer
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts.layers[l];
            let off = offsets[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += d * xi;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // x is tanh output of the previous layer
            for (p, a) in prev.iter_mut().zip(x) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax over the entries where `mask` is true; masked entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, z)| *z)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits
            .iter()
            .enumerate()
            .filter(|(i, _)| allowed(*i))
            .map(|(_, z)| (z - max).exp())
            .sum::<f64>()
            .ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, z)| if allowed(i) { z - lse } else { f64::NEG_INFINITY })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn loss(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
        net.forward(x).iter().zip(w).map(|(o, w)| o * w).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(3);
        let mut net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let w = [0.8, -1.3];
        let acts = net.forward_cached(&x);
        let mut grad = vec![0.0; net.num_params()];
        net.backward(&acts, &w, &mut grad);
        let h = 1e-6;
        for (i, g) in grad.iter().enumerate() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net, &x, &w);
            net.params_mut()[i] = orig - h;
            let down = loss(&net, &x, &w);
            net.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g).abs() < 1e-7, "param {i}: fd {fd} vs {g}");
        }
    }

    #[test]
    fn cached_and_plain_forward_agree() {
        let net = Mlp::new(&[4, 8, 3], 0.5, &mut seeded(1));
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x), net.forward_cached(&x).output());
    }

    #[test]
    fn masked_log_softmax_ignores_masked_entries() {
        let lp = masked_log_softmax(&[1.0, 50.0, 2.0], Some(&[true, false, true]));
        assert!(lp[1].is_infinite());
        let total: f64 = lp.iter().filter(|v| v.is_finite()).map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
