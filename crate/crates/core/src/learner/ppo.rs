//! Proximal policy optimisation for a single independent learner.
//!
//! The loss minimised on each minibatch is
//!
//! ```text
//! L = -mean(min(rho A, clip(rho, 1 - eps, 1 + eps) A))
//!     + vf_coeff * mean(max((v - R)^2, (v_old + clip(v - v_old, +-vf_clip) - R)^2))
//!     - entropy_coeff * entropy
//! ```
//!
//! with `rho = exp(log pi(a) - log pi_old(a))`. Gradients are computed by
//! hand and applied with Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_entropy, gaussian_log_prob, ForwardCache, PolicyParams};
use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    pub learning_rate: f64,
    pub clip: f64,
    pub vf_clip: f64,
    pub kl_target: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub vf_coeff: f64,
    pub entropy_coeff: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Environment steps collected between updates.
    pub steps_per_update: usize,
    /// `log_std` of freshly initialised policies.
    #[serde(default)]
    pub init_log_std: f64,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            learning_rate: 1e-4,
            clip: 0.3,
            vf_clip: 10.0,
            kl_target: 0.01,
            gamma: 0.99,
            gae_lambda: 1.0,
            vf_coeff: 1.0,
            entropy_coeff: 0.0,
            epochs_per_update: 30,
            minibatch_size: 128,
            steps_per_update: 4000,
            init_log_std: 0.0,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip", self.clip),
            ("vf_clip", self.vf_clip),
            ("kl_target", self.kl_target),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return param(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return param("gamma and gae_lambda must lie in [0, 1]");
        }
        if !self.init_log_std.is_finite() {
            return param("init_log_std must be finite");
        }
        if self.vf_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return param("loss coefficients must be nonnegative");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.steps_per_update == 0 {
            return param("epochs, minibatch size and steps per update must be positive");
        }
        Ok(())
    }
}

/// One agent-step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Unclipped Gaussian sample.
    pub raw_action: f64,
    /// Effort actually applied, `raw_action` clipped to `[0, e_max]`.
    pub effort: f64,
    /// Log-density of `raw_action` under the behaviour policy.
    pub log_prob: f64,
    pub mean: f64,
    pub log_std: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// Advantages and value targets by generalised advantage estimation.
///
/// `last_value` bootstraps a segment that was cut before its episode ended;
/// steps flagged `done` never bootstrap.
pub fn gae_advantages(steps: &[Transition], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = steps.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let s = &steps[t];
        let (next_value, carry) = if s.done {
            (0.0, 0.0)
        } else if t + 1 < n {
            (steps[t + 1].value, 1.0)
        } else {
            (last_value, 0.0)
        };
        let delta = s.reward + gamma * next_value - s.value;
        adv[t] = delta + gamma * lambda * carry * next_adv;
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(steps).map(|(a, s)| a + s.value).collect();
    (adv, ret)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    pub obs: Vec<Vec<f64>>,
    pub raw_actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub old_means: Vec<f64>,
    pub old_log_stds: Vec<f64>,
    pub old_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Appends a trajectory segment with its advantages and value targets.
    pub fn extend(&mut self, steps: &[Transition], advantages: &[f64], returns: &[f64]) {
        for ((s, a), r) in steps.iter().zip(advantages).zip(returns) {
            self.obs.push(s.obs.clone());
            self.raw_actions.push(s.raw_action);
            self.old_log_probs.push(s.log_prob);
            self.old_means.push(s.mean);
            self.old_log_stds.push(s.log_std);
            self.old_values.push(s.value);
            self.advantages.push(*a);
            self.returns.push(*r);
        }
    }

    /// Shifts and scales advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n == 0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = 1.0 / (var.sqrt() + 1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) * scale;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Loss and its gradient over the samples in `indices`, evaluated at `flat`.
pub fn loss_and_grad(
    params: &PolicyParams,
    flat: &[f64],
    batch: &SampleBatch,
    indices: &[usize],
    hyper: &PpoHyper,
) -> (LossStats, Vec<f64>) {
    let mut grad = vec![0.0; flat.len()];
    let stats = accumulate(params, flat, batch, indices, hyper, Some(&mut grad));
    (stats, grad)
}

/// Loss only, without the gradient.
pub fn loss(params: &PolicyParams, flat: &[f64], batch: &SampleBatch, indices: &[usize], hyper: &PpoHyper) -> LossStats {
    accumulate(params, flat, batch, indices, hyper, None)
}

fn accumulate(
    params: &PolicyParams,
    flat: &[f64],
    batch: &SampleBatch,
    indices: &[usize],
    hyper: &PpoHyper,
    mut grad: Option<&mut Vec<f64>>,
) -> LossStats {
    let m = indices.len().max(1) as f64;
    let log_std = flat[flat.len() - 1];
    let inv_var = (-2.0 * log_std).exp();
    let mut cache = ForwardCache::default();
    let mut s = LossStats::default();

    for &i in indices {
        let out = params.forward_cached(flat, &batch.obs[i], &mut cache);
        let a = batch.raw_actions[i];
        let adv = batch.advantages[i];
        let logp = gaussian_log_prob(a, out.mean, log_std);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - hyper.clip, 1.0 + hyper.clip);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped * adv;
        let surrogate = unclipped_obj.min(clipped_obj);
        let d_ratio = if unclipped_obj <= clipped_obj { adv } else { 0.0 };
        if (ratio - 1.0).abs() > hyper.clip {
            s.clip_fraction += 1.0;
        }
        s.policy_loss -= surrogate;
        s.mean_ratio += ratio;

        let v_old = batch.old_values[i];
        let target = batch.returns[i];
        let v_clip = v_old + (out.value - v_old).clamp(-hyper.vf_clip, hyper.vf_clip);
        let l1 = (out.value - target).powi(2);
        let l2 = (v_clip - target).powi(2);
        let d_value = if l1 >= l2 {
            2.0 * (out.value - target)
        } else if (out.value - v_old).abs() < hyper.vf_clip {
            2.0 * (v_clip - target)
        } else {
            0.0
        };
        s.value_loss += l1.max(l2);

        let old_ls = batch.old_log_stds[i];
        let dm = batch.old_means[i] - out.mean;
        s.mean_kl += log_std - old_ls + ((2.0 * old_ls).exp() + dm * dm) * 0.5 * inv_var - 0.5;

        if let Some(g) = grad.as_deref_mut() {
            // d(-surrogate)/dtheta = -d_ratio * ratio * dlogp/dtheta
            let coef = -d_ratio * ratio / m;
            let diff = a - out.mean;
            let d_mean = coef * diff * inv_var;
            let d_log_std = coef * (diff * diff * inv_var - 1.0);
            let d_val = hyper.vf_coeff * d_value / m;
            params.backward(flat, &cache, d_mean, d_log_std, d_val, g);
        }
    }

    s.policy_loss /= m;
    s.value_loss /= m;
    s.mean_kl /= m;
    s.clip_fraction /= m;
    s.mean_ratio /= m;
    s.entropy = gaussian_entropy(log_std);
    s.total = s.policy_loss + hyper.vf_coeff * s.value_loss - hyper.entropy_coeff * s.entropy;
    if let Some(g) = grad {
        let n = g.len();
        g[n - 1] -= hyper.entropy_coeff;
    }
    s
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub epochs_run: usize,
    pub minibatches: usize,
    /// Loss statistics of the first minibatch of the first epoch.
    pub initial: LossStats,
    /// Loss statistics over the whole batch after the last epoch.
    pub last: LossStats,
    pub early_stopped: bool,
}

/// Runs the PPO epochs on one batch.
///
/// Advantages are normalised per batch. After every epoch the mean KL
/// divergence from the behaviour policy is measured on the whole batch and
/// the loop stops once it exceeds `1.5 * kl_target`. A non-finite gradient
/// restores the parameters and optimiser to their state before the call.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    optimizer: &mut Adam,
    batch: &SampleBatch,
    hyper: &PpoHyper,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return param("empty PPO batch");
    }
    let mut batch = batch.clone();
    batch.normalize_advantages();

    let snapshot = (params.clone(), optimizer.clone());
    let mut indices: Vec<usize> = (0..batch.len()).collect();
    let all = indices.clone();
    let mut stats = UpdateStats::default();

    for epoch in 0..hyper.epochs_per_update {
        indices.shuffle(rng);
        for chunk in indices.chunks(hyper.minibatch_size) {
            let (ls, grad) = loss_and_grad(params, params.as_flat(), &batch, chunk, hyper);
            if epoch == 0 && stats.minibatches == 0 {
                stats.initial = ls;
            }
            if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
                let seg = params.segments().iter().position(|r| r.contains(&bad)).unwrap_or(0);
                let part = ["policy network", "value network", "log_std"][seg];
                *params = snapshot.0;
                *optimizer = snapshot.1;
                return Err(Error::Numerical(format!(
                    "non-finite gradient at parameter {bad} ({part}) in epoch {epoch}: \
                     policy loss {}, value loss {}, mean ratio {}",
                    ls.policy_loss, ls.value_loss, ls.mean_ratio
                )));
            }
            optimizer.step(params.as_flat_mut(), &grad);
            stats.minibatches += 1;
        }
        stats.epochs_run = epoch + 1;
        let full = loss(params, params.as_flat(), &batch, &all, hyper);
        stats.last = full;
        if full.mean_kl > 1.5 * hyper.kl_target {
            stats.early_stopped = true;
            break;
        }
    }
    if !params.is_finite() {
        *params = snapshot.0;
        *optimizer = snapshot.1;
        return Err(Error::Numerical("parameters became non-finite during update".into()));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            obs: vec![0.0, 0.0, 1.0],
            raw_action: 0.5,
            effort: 0.5,
            log_prob: 0.0,
            mean: 0.5,
            log_std: 0.0,
            value,
            reward,
            done,
        }
    }

    #[test]
    fn gae_single_step() {
        let (a, r) = gae_advantages(&[tr(1.0, 0.0, true)], 0.0, 0.99, 1.0);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gae_constant_reward() {
        let steps = [tr(1.0, 0.0, false), tr(1.0, 0.0, false), tr(1.0, 0.0, true)];
        let (_, r) = gae_advantages(&steps, 0.0, 1.0, 1.0);
        assert_eq!(r, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn gae_matches_discounted_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(1..30);
            let gamma = rng.random_range(0.5..1.0);
            let steps: Vec<Transition> = (0..n)
                .map(|i| tr(rng.random_range(-1.0..2.0), rng.random_range(-1.0..1.0), i + 1 == n))
                .collect();
            let (adv, ret) = gae_advantages(&steps, 0.0, gamma, 1.0);
            for t in 0..n {
                let brute: f64 = (t..n)
                    .map(|k| gamma.powi((k - t) as i32) * steps[k].reward)
                    .sum();
                assert!((ret[t] - brute).abs() < 1e-10);
                assert!((adv[t] - (brute - steps[t].value)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gae_bootstraps_cut_segments() {
        let steps = [tr(1.0, 0.5, false), tr(1.0, 0.5, false)];
        let (_, r) = gae_advantages(&steps, 10.0, 0.9, 1.0);
        assert!((r[1] - (1.0 + 9.0)).abs() < 1e-12);
        assert!((r[0] - (1.0 + 0.9 * 10.0)).abs() < 1e-12);
        // lambda = 0 reduces to one-step TD targets
        let (a, _) = gae_advantages(&steps, 10.0, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * 0.5 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn defaults_follow_reference_table() {
        let h = PpoHyper::default();
        assert_eq!(h.learning_rate, 1e-4);
        assert_eq!(h.clip, 0.3);
        assert_eq!(h.vf_clip, 10.0);
        assert_eq!(h.kl_target, 0.01);
        assert_eq!(h.gamma, 0.99);
        assert_eq!(h.gae_lambda, 1.0);
        assert_eq!(h.vf_coeff, 1.0);
        assert_eq!(h.entropy_coeff, 0.0);
        assert!(h.validate().is_ok());
        assert!(PpoHyper { clip: 0.0, ..h }.validate().is_err());
        assert!(PpoHyper { minibatch_size: 0, ..h }.validate().is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyParams::zeros(3, &[4], 1.0).unwrap();
        let mut opt = Adam::new(p.len(), 1e-3);
        let r = ppo_update(&mut p, &mut opt, &SampleBatch::default(), &PpoHyper::default(), &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }
}
