//! A small dense network with tanh hidden layers, hand-written backprop and
//! an Adam optimizer, all over flat `f64` parameter vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first.
    pub sizes: Vec<usize>,
    /// Per layer: row-major weights (out x in) then biases.
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform fan-in initialization; the last layer is scaled by `out_gain`.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut impl Rng) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        let layers = sizes.len() - 1;
        for (i, w) in sizes.windows(2).enumerate() {
            let gain = if i + 1 == layers { out_gain } else { 1.0 };
            let bound = gain * (3.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                params.push(rng.gen_range(-bound..=bound));
            }
            params.extend(std::iter::repeat(0.0).take(w[1]));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Cache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for i in 0..layers {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = &acts[i];
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if i + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        (acts.last().unwrap().clone(), Cache { acts })
    }

    /// Adds `d(output·dout)/dparams` into `grad`.
    pub fn backward(&self, cache: &Cache, dout: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dout.to_vec();
        for i in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            let o = offsets[i];
            let input = &cache.acts[i];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[o + r * n_in..o + (r + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                grad[o + n_in * n_out + r] += d;
            }
            if i > 0 {
                let w = &self.params[o..o + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for r in 0..n_out {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                // through tanh: 1 - a^2
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` down so its L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 0.9];
        let dout = [0.6, -1.1];
        let f = |n: &Mlp| n.forward(&x).iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>();
        let (_, cache) = net.forward_cached(&x);
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&cache, &dout, &mut grad);
        for i in 0..net.params.len() {
            let h = 1e-6;
            let mut p = net.clone();
            p.params[i] += h;
            let mut m = net.clone();
            m.params[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }
}
