//! Gaussian effort policy with a separate value network.
//!
//! The policy network maps an observation to a pre-activation `z`; the action
//! mean is `e_max * sigmoid(z)`. The standard deviation comes from a single
//! state-independent `log_std` parameter. Sampled actions are clipped to
//! `[0, e_max]` before they reach the fishery, while log-probabilities are
//! evaluated on the unclipped sample.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{MlpCache, MlpShape};
use crate::error::{param, Result};
use crate::signal::SignalSource;

/// Hidden widths of both networks.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Output-layer scale of the policy head, keeping the initial mean near `e_max / 2`.
const POLICY_HEAD_SCALE: f64 = 0.01;

/// What an agent sees before acting: its own previous effort and revenue and
/// the current signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub prev_effort: f64,
    pub prev_reward: f64,
    pub signal: Vec<f64>,
}

impl Observation {
    pub fn new(prev_effort: f64, prev_reward: f64, signal: Vec<f64>) -> Self {
        Observation {
            prev_effort,
            prev_reward,
            signal,
        }
    }

    pub fn from_signal(prev_effort: f64, prev_reward: f64, source: &SignalSource, t: usize) -> Self {
        Observation::new(prev_effort, prev_reward, source.one_hot(t))
    }

    pub fn dim(&self) -> usize {
        self.signal.len() + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.prev_effort);
        v.push(self.prev_reward);
        v.extend_from_slice(&self.signal);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: f64,
    pub std: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    policy_shape: MlpShape,
    value_shape: MlpShape,
    e_max: f64,
    flat: Vec<f64>,
}

/// Intermediate values of one forward pass, needed for the gradient.
#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache {
    pub policy: MlpCache,
    pub value: MlpCache,
    pub sigmoid: f64,
}

impl PolicyParams {
    /// All-zero parameters for observations of `obs_dim` entries.
    pub fn zeros(obs_dim: usize, hidden: &[usize], e_max: f64) -> Result<Self> {
        if obs_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return param(format!("bad network shape: obs_dim {obs_dim}, hidden {hidden:?}"));
        }
        if !(e_max > 0.0) {
            return param("e_max must be positive");
        }
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let policy_shape = MlpShape::new(sizes.clone());
        let value_shape = MlpShape::new(sizes);
        let n = policy_shape.param_count() + value_shape.param_count() + 1;
        Ok(PolicyParams {
            policy_shape,
            value_shape,
            e_max,
            flat: vec![0.0; n],
        })
    }

    /// Glorot-initialised networks with a down-scaled policy head and `log_std = 0`.
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], e_max: f64, rng: &mut R) -> Result<Self> {
        let mut p = PolicyParams::zeros(obs_dim, hidden, e_max)?;
        let np = p.policy_shape.param_count();
        let nv = p.value_shape.param_count();
        let (pol, rest) = p.flat.split_at_mut(np);
        p.policy_shape.init(pol, POLICY_HEAD_SCALE, rng);
        p.value_shape.init(&mut rest[..nv], 1.0, rng);
        Ok(p)
    }

    /// Rebuilds parameters from a flat vector produced by [`PolicyParams::as_flat`].
    pub fn from_flat(obs_dim: usize, hidden: &[usize], e_max: f64, flat: Vec<f64>) -> Result<Self> {
        let mut p = PolicyParams::zeros(obs_dim, hidden, e_max)?;
        if flat.len() != p.flat.len() {
            return param(format!(
                "expected {} parameters, got {}",
                p.flat.len(),
                flat.len()
            ));
        }
        p.flat = flat;
        Ok(p)
    }

    pub fn obs_dim(&self) -> usize {
        self.policy_shape.input_dim()
    }

    pub fn signal_dim(&self) -> usize {
        self.obs_dim() - 2
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.policy_shape.sizes();
        &s[1..s.len() - 1]
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn log_std(&self) -> f64 {
        *self.flat.last().unwrap()
    }

    pub fn set_log_std(&mut self, v: f64) {
        *self.flat.last_mut().unwrap() = v;
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|x| x.is_finite())
    }

    /// Index ranges of the policy network, value network and `log_std` in the flat vector.
    pub fn segments(&self) -> [std::ops::Range<usize>; 3] {
        let np = self.policy_shape.param_count();
        let nv = self.value_shape.param_count();
        [0..np, np..np + nv, np + nv..np + nv + 1]
    }

    pub fn forward(&self, obs: &[f64]) -> Result<PolicyOutput> {
        if obs.len() != self.obs_dim() {
            return param(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.obs_dim()
            ));
        }
        let mut cache = ForwardCache::default();
        Ok(self.forward_cached(&self.flat, obs, &mut cache))
    }

    pub(crate) fn forward_cached(&self, flat: &[f64], obs: &[f64], cache: &mut ForwardCache) -> PolicyOutput {
        let [pr, vr, lr] = self.segments();
        let z = self.policy_shape.forward(&flat[pr], obs, &mut cache.policy)[0];
        let value = self.value_shape.forward(&flat[vr], obs, &mut cache.value)[0];
        let sig = sigmoid(z);
        cache.sigmoid = sig;
        PolicyOutput {
            mean: self.e_max * sig,
            std: flat[lr.start].exp(),
            value,
        }
    }

    /// Accumulates gradients given `dL/dmean`, `dL/dlog_std` and `dL/dvalue`.
    pub(crate) fn backward(
        &self,
        flat: &[f64],
        cache: &ForwardCache,
        d_mean: f64,
        d_log_std: f64,
        d_value: f64,
        grad: &mut [f64],
    ) {
        let [pr, vr, lr] = self.segments();
        let d_z = d_mean * self.e_max * cache.sigmoid * (1.0 - cache.sigmoid);
        if d_z != 0.0 {
            self.policy_shape
                .backward(&flat[pr.clone()], &cache.policy, &[d_z], &mut grad[pr]);
        }
        if d_value != 0.0 {
            self.value_shape
                .backward(&flat[vr.clone()], &cache.value, &[d_value], &mut grad[vr]);
        }
        grad[lr.start] += d_log_std;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-density of `N(mean, exp(log_std)^2)` at `x`.
pub fn gaussian_log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

pub fn gaussian_entropy(log_std: f64) -> f64 {
    log_std + 0.5 * (1.0 + (2.0 * PI).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub raw: f64,
    pub effort: f64,
    pub log_prob: f64,
}

/// Draws `raw ~ N(mean, std)` and clips it to `[0, e_max]`.
pub fn sample_action<R: Rng + ?Sized>(mean: f64, std: f64, e_max: f64, rng: &mut R) -> Result<ActionSample> {
    if !(std > 0.0) {
        return param(format!("standard deviation must be positive, got {std}"));
    }
    let eps: f64 = StandardNormal.sample(rng);
    let raw = mean + std * eps;
    Ok(ActionSample {
        raw,
        effort: raw.clamp(0.0, e_max),
        log_prob: gaussian_log_prob(raw, mean, std.ln()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs() {
        let p = PolicyParams::zeros(5, &DEFAULT_HIDDEN, 1.0).unwrap();
        let out = p.forward(&[0.3, 0.1, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(out.mean, 0.5);
        assert_eq!(out.value, 0.0);
        assert_eq!(out.std, 1.0);
        let p = PolicyParams::zeros(3, &DEFAULT_HIDDEN, 2.5).unwrap();
        assert_eq!(p.forward(&[0.0; 3]).unwrap().mean, 1.25);
    }

    #[test]
    fn dimension_mismatch() {
        let p = PolicyParams::zeros(4, &DEFAULT_HIDDEN, 1.0).unwrap();
        assert!(p.forward(&[0.0; 5]).is_err());
        assert!(PolicyParams::zeros(4, &[64, 0], 1.0).is_err());
        assert!(PolicyParams::from_flat(4, &[8], 1.0, vec![0.0; 3]).is_err());
    }

    #[test]
    fn signal_changes_mean_for_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut differing = 0;
        for _ in 0..20 {
            let mut p = PolicyParams::init(5, &DEFAULT_HIDDEN, 1.0, &mut rng).unwrap();
            for v in p.as_flat_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
            let a = p.forward(&[0.5, 0.2, 1.0, 0.0, 0.0]).unwrap().mean;
            let b = p.forward(&[0.5, 0.2, 0.0, 1.0, 0.0]).unwrap().mean;
            if (a - b).abs() > 1e-9 {
                differing += 1;
            }
        }
        assert_eq!(differing, 20);
    }

    #[test]
    fn init_starts_near_half_effort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = PolicyParams::init(6, &DEFAULT_HIDDEN, 1.0, &mut rng).unwrap();
        assert_eq!(p.log_std(), 0.0);
        for g in 0..4 {
            let mut obs = vec![0.7, 0.3, 0.0, 0.0, 0.0, 0.0];
            obs[2 + g] = 1.0;
            let m = p.forward(&obs).unwrap().mean;
            assert!((m - 0.5).abs() < 0.02, "{m}");
        }
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_action(0.4, 1e-12, 1.0, &mut rng).unwrap();
        assert!((s.effort - 0.4).abs() < 1e-9);
        let s = sample_action(1.7, 1e-12, 1.0, &mut rng).unwrap();
        assert_eq!(s.effort, 1.0);
        assert!(sample_action(0.4, 0.0, 1.0, &mut rng).is_err());

        let lp = gaussian_log_prob(0.3, 0.3, 0.2f64.ln());
        assert!((lp + (0.2 * (2.0 * PI).sqrt()).ln()).abs() < 1e-14);

        let n = 100_000;
        let (mean, std) = (0.3, 0.8);
        let mut sum = 0.0;
        for _ in 0..n {
            let s = sample_action(mean, std, 1.0, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&s.effort));
            assert!((s.log_prob - gaussian_log_prob(s.raw, mean, std.ln())).abs() < 1e-12);
            sum += s.raw;
        }
        let emp = sum / n as f64;
        assert!((emp - mean).abs() < 3.0 * std / (n as f64).sqrt(), "{emp}");
    }
}
