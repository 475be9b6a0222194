//! Agents as seen by the rollout loop.

use rand::{Rng, RngCore};

use super::policy::{gaussian_log_prob, sample_action, Observation, PolicyParams};
use super::ppo::{gae_advantages, ppo_update, Adam, PpoHyper, SampleBatch, Transition, UpdateStats};
use crate::error::{param, Result};

/// One action choice together with what PPO needs to learn from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub raw_action: f64,
    pub effort: f64,
    pub log_prob: f64,
    pub mean: f64,
    pub log_std: f64,
    pub value: f64,
}

/// A stochastic mapping from observations to efforts; what CIC probes.
pub trait Policy {
    fn signal_dim(&self) -> usize;
    fn e_max(&self) -> f64;
    fn sample_effort(&self, obs: &Observation, rng: &mut dyn RngCore) -> Result<f64>;
}

/// A participant in the rollout loop. Every agent keeps its own experience
/// buffer and never sees another agent's transitions.
pub trait Agent: Policy + Send {
    fn decide(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> Result<Decision>;

    /// Stores the outcome of the last decision.
    fn record(&mut self, transition: Transition);

    /// Learns from the buffered experience and clears it. `bootstrap` is the
    /// next observation when the buffer ends mid-episode.
    fn learn(&mut self, bootstrap: Option<&Observation>, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>>;

    fn params(&self) -> Option<&PolicyParams> {
        None
    }
}

/// Independent PPO learner with its own parameters and optimiser.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    params: PolicyParams,
    optimizer: Adam,
    hyper: PpoHyper,
    buffer: Vec<Transition>,
    /// Completed segments with their advantages and value targets.
    batch: SampleBatch,
    pub deterministic: bool,
}

impl PpoAgent {
    pub fn new<R: Rng + ?Sized>(
        signal_dim: usize,
        e_max: f64,
        hidden: &[usize],
        hyper: PpoHyper,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        let mut params = PolicyParams::init(signal_dim + 2, hidden, e_max, rng)?;
        params.set_log_std(hyper.init_log_std);
        Ok(PpoAgent::from_params(params, hyper))
    }

    pub fn from_params(params: PolicyParams, hyper: PpoHyper) -> Self {
        let optimizer = Adam::new(params.len(), hyper.learning_rate);
        PpoAgent {
            params,
            optimizer,
            hyper,
            buffer: Vec::new(),
            batch: SampleBatch::default(),
            deterministic: false,
        }
    }

    pub fn policy_params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn hyper(&self) -> &PpoHyper {
        &self.hyper
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len() + self.batch.len()
    }

    /// Effort for an observation: `clamp(mean)` in deterministic mode, a
    /// clipped Gaussian sample otherwise.
    pub fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.evaluate(obs, rng)?.effort)
    }

    fn evaluate(&self, obs: &Observation, rng: &mut dyn RngCore) -> Result<Decision> {
        if obs.signal.len() != self.params.signal_dim() {
            return param(format!(
                "agent expects a signal of size {}, got {}",
                self.params.signal_dim(),
                obs.signal.len()
            ));
        }
        let out = self.params.forward(&obs.to_vec())?;
        let log_std = self.params.log_std();
        if self.deterministic {
            return Ok(Decision {
                raw_action: out.mean,
                effort: out.mean.clamp(0.0, self.params.e_max()),
                log_prob: gaussian_log_prob(out.mean, out.mean, log_std),
                mean: out.mean,
                log_std,
                value: out.value,
            });
        }
        let s = sample_action(out.mean, out.std, self.params.e_max(), rng)?;
        Ok(Decision {
            raw_action: s.raw,
            effort: s.effort,
            log_prob: gaussian_log_prob(s.raw, out.mean, log_std),
            mean: out.mean,
            log_std,
            value: out.value,
        })
    }

    /// Closes the current segment: computes its advantages and moves it into the batch.
    fn close_segment(&mut self, bootstrap: Option<&Observation>) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let last_value = match (self.buffer.last().map(|t| t.done), bootstrap) {
            (Some(false), Some(obs)) => self.params.forward(&obs.to_vec())?.value,
            _ => 0.0,
        };
        let (adv, ret) = gae_advantages(&self.buffer, last_value, self.hyper.gamma, self.hyper.gae_lambda);
        self.batch.extend(&self.buffer, &adv, &ret);
        self.buffer.clear();
        Ok(())
    }
}

impl Policy for PpoAgent {
    fn signal_dim(&self) -> usize {
        self.params.signal_dim()
    }

    fn e_max(&self) -> f64 {
        self.params.e_max()
    }

    fn sample_effort(&self, obs: &Observation, rng: &mut dyn RngCore) -> Result<f64> {
        self.act(obs, rng)
    }
}

impl Agent for PpoAgent {
    fn decide(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> Result<Decision> {
        self.evaluate(obs, rng)
    }

    fn record(&mut self, transition: Transition) {
        let done = transition.done;
        self.buffer.push(transition);
        if done {
            // terminal segments never bootstrap
            let _ = self.close_segment(None);
        }
    }

    fn learn(&mut self, bootstrap: Option<&Observation>, rng: &mut dyn RngCore) -> Result<Option<UpdateStats>> {
        self.close_segment(bootstrap)?;
        if self.batch.is_empty() {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.batch);
        ppo_update(&mut self.params, &mut self.optimizer, &batch, &self.hyper, rng).map(Some)
    }

    fn params(&self) -> Option<&PolicyParams> {
        Some(&self.params)
    }
}

/// Agent that always exerts the same effort and never learns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantAgent {
    pub effort: f64,
    pub e_max: f64,
    pub signal_dim: usize,
}

impl Policy for ConstantAgent {
    fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    fn e_max(&self) -> f64 {
        self.e_max
    }

    fn sample_effort(&self, _obs: &Observation, _rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.effort)
    }
}

impl Agent for ConstantAgent {
    fn decide(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) -> Result<Decision> {
        Ok(Decision {
            raw_action: self.effort,
            effort: self.effort,
            log_prob: 0.0,
            mean: self.effort,
            log_std: 0.0,
            value: 0.0,
        })
    }

    fn record(&mut self, _transition: Transition) {}

    fn learn(&mut self, _bootstrap: Option<&Observation>, _rng: &mut dyn RngCore) -> Result<Option<UpdateStats>> {
        Ok(None)
    }
}
