//! Causal influence of the signal: mutual information between the signal
//! value and the discretised action of one policy.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::learner::{Observation, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CicConfig {
    pub n_states: usize,
    pub n_samples: usize,
    pub n_bins: usize,
}

impl Default for CicConfig {
    fn default() -> Self {
        CicConfig {
            n_states: 100,
            n_samples: 100,
            n_bins: 10,
        }
    }
}

impl CicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return param(format!("n_bins must be at least 2, got {}", self.n_bins));
        }
        if self.n_states == 0 || self.n_samples == 0 {
            return param("n_states and n_samples must be positive");
        }
        Ok(())
    }
}

/// Source of random signal-free observation parts `(prev_effort, prev_reward)`.
pub trait PartialStateSampler {
    fn sample(&self, rng: &mut dyn RngCore) -> (f64, f64);
}

/// `prev_effort ~ U[0, e_max]`, `prev_reward ~ U[0, price * e_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPartialStates {
    pub e_max: f64,
    pub reward_max: f64,
}

impl UniformPartialStates {
    pub fn new(e_max: f64, price: f64) -> Self {
        UniformPartialStates {
            e_max,
            reward_max: price * e_max,
        }
    }
}

impl PartialStateSampler for UniformPartialStates {
    fn sample(&self, rng: &mut dyn RngCore) -> (f64, f64) {
        let e = if self.e_max > 0.0 { rng.random_range(0.0..=self.e_max) } else { 0.0 };
        let r = if self.reward_max > 0.0 { rng.random_range(0.0..=self.reward_max) } else { 0.0 };
        (e, r)
    }
}

fn bin_of(a: f64, e_max: f64, n_bins: usize) -> usize {
    let i = (a / e_max * n_bins as f64).floor();
    if i <= 0.0 {
        0
    } else {
        (i as usize).min(n_bins - 1)
    }
}

/// Mutual information (nats) between a uniformly distributed signal and the
/// action bin, given `conditionals[g][bin] = p(bin | g)`.
pub fn cic_exact(conditionals: &[Vec<f64>]) -> f64 {
    let g = conditionals.len();
    if g == 0 {
        return 0.0;
    }
    let pg = 1.0 / g as f64;
    let n_bins = conditionals.iter().map(Vec::len).max().unwrap_or(0);
    let mut total = 0.0;
    for b in 0..n_bins {
        let pa: f64 = conditionals.iter().map(|c| c.get(b).copied().unwrap_or(0.0) * pg).sum();
        if pa == 0.0 {
            continue;
        }
        for c in conditionals {
            let joint = c.get(b).copied().unwrap_or(0.0) * pg;
            if joint > 0.0 {
                total += joint * (joint / (pa * pg)).ln();
            }
        }
    }
    total
}

/// Monte-Carlo estimate of the signal's influence on `policy`, averaged over
/// `n_states` random partial states.
pub fn cic(
    policy: &dyn Policy,
    sampler: &dyn PartialStateSampler,
    config: &CicConfig,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    config.validate()?;
    let g = policy.signal_dim();
    if g == 0 {
        return param("policy has an empty signal");
    }
    let e_max = policy.e_max();
    let mut conditionals = vec![vec![0.0; config.n_bins]; g];
    let mut total = 0.0;
    for _ in 0..config.n_states {
        let (prev_effort, prev_reward) = sampler.sample(rng);
        for (j, hist) in conditionals.iter_mut().enumerate() {
            hist.iter_mut().for_each(|h| *h = 0.0);
            let mut signal = vec![0.0; g];
            signal[j] = 1.0;
            let obs = Observation::new(prev_effort, prev_reward, signal);
            for _ in 0..config.n_samples {
                let a = policy.sample_effort(&obs, rng)?;
                hist[bin_of(a, e_max, config.n_bins)] += 1.0;
            }
            hist.iter_mut().for_each(|h| *h /= config.n_samples as f64);
        }
        total += cic_exact(&conditionals);
    }
    Ok(total / config.n_states as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ConstantAgent;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bins_are_half_open_with_closed_top() {
        assert_eq!(bin_of(0.0, 1.0, 10), 0);
        assert_eq!(bin_of(0.1, 2.0, 10), 0);
        assert_eq!(bin_of(0.2, 2.0, 10), 1);
        assert_eq!(bin_of(1.0, 1.0, 10), 9);
        assert_eq!(bin_of(-0.5, 1.0, 10), 0);
    }

    #[test]
    fn single_signal_scores_zero() {
        let p = ConstantAgent {
            effort: 0.3,
            e_max: 1.0,
            signal_dim: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = cic(&p, &UniformPartialStates::new(1.0, 1.0), &CicConfig::default(), &mut rng).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn exact_examples() {
        assert!((cic_exact(&[vec![1.0, 0.0], vec![0.0, 1.0]]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(cic_exact(&[vec![0.5, 0.5], vec![0.5, 0.5]]), 0.0);
        let four: Vec<Vec<f64>> = (0..4).map(|g| (0..4).map(|b| if b == g { 1.0 } else { 0.0 }).collect()).collect();
        assert!((cic_exact(&four) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(CicConfig { n_bins: 1, ..CicConfig::default() }.validate().is_err());
        assert!(CicConfig { n_states: 0, ..CicConfig::default() }.validate().is_err());
    }
}
