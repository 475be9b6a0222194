//! Fully connected tanh network over a flat parameter slice.
//!
//! Layer `l` stores its weights row-major (`out x in`) followed by its bias.
//! Hidden layers use `tanh`; the output layer is linear.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

/// Activations recorded by a forward pass, consumed by [`MlpShape::backward`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpShape {
    /// `sizes = [input, hidden.., output]`.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|s| *s > 0), "bad layer sizes {sizes:?}");
        MlpShape { sizes }
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

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights, zero biases; the output layer is scaled by `out_scale`.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], out_scale: f64, rng: &mut R) {
        debug_assert_eq!(params.len(), self.param_count());
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l + 1 == layers { out_scale } else { 1.0 };
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = scale * rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out;
            params[off..off + fan_out].fill(0.0);
            off += fan_out;
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], cache: &mut MlpCache) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        cache.acts.clear();
        cache.acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = &cache.acts[l];
            let mut out: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            cache.acts.push(out);
        }
        cache.acts.last().unwrap().clone()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            {
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            // input to layer l is tanh output of layer l-1
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_and_zero_network() {
        let s = MlpShape::new(vec![5, 64, 64, 1]);
        assert_eq!(s.param_count(), 5 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        let params = vec![0.0; s.param_count()];
        let mut c = MlpCache::default();
        assert_eq!(s.forward(&params, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut c), vec![0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s = MlpShape::new(vec![3, 4, 5, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = vec![0.0; s.param_count()];
        s.init(&mut params, 1.0, &mut rng);
        for p in params.iter_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x = [0.3, -1.2, 0.8];
        let weights = [0.7, -1.3];
        let loss = |p: &[f64]| {
            let mut c = MlpCache::default();
            let y = s.forward(p, &x, &mut c);
            y[0] * weights[0] + y[1] * weights[1]
        };
        let mut c = MlpCache::default();
        s.forward(&params, &x, &mut c);
        let mut grad = vec![0.0; params.len()];
        s.backward(&params, &c, &weights, &mut grad);
        for i in 0..params.len() {
            let h = 1e-6;
            let mut a = params.clone();
            let mut b = params.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
