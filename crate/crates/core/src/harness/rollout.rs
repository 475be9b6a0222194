//! Episode and trial loops.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{CellSpec, ExperimentConfig};
use crate::env::{self, EnvParams};
use crate::error::{param, Error, Result};
use crate::learner::{Agent, Checkpoint, Observation, PpoAgent, PpoHyper, Transition};
use crate::metrics::{
    cic, convergence_check, per_signal_effort_profile, EffortProfile, EpisodeRecord, UniformPartialStates,
};
use crate::signal::SignalSource;

/// Seed of one trial, derived from the base seed, the cell's seed key and
/// the trial index.
pub fn trial_seed(base_seed: u64, cell_key: &str, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update((cell_key.len() as u64).to_le_bytes());
    h.update(cell_key.as_bytes());
    h.update((trial as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Stream 0 of the trial seed drives the signal offsets.
pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Agent `n` draws from stream `n + 1` of the trial seed.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(agent as u64 + 1);
    r
}

fn evaluation_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(u64::MAX);
    r
}

/// Builds the agents of one trial.
pub trait AgentFactory: Sync {
    fn make(&self, cell: &CellSpec, agent: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Agent>>;
}

impl<F> AgentFactory for F
where
    F: Fn(&CellSpec, usize, &mut ChaCha8Rng) -> Result<Box<dyn Agent>> + Sync,
{
    fn make(&self, cell: &CellSpec, agent: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Agent>> {
        self(cell, agent, rng)
    }
}

/// Freshly initialised PPO learners.
#[derive(Debug, Clone)]
pub struct PpoFactory {
    pub hidden: Vec<usize>,
    pub hyper: PpoHyper,
    pub e_max: f64,
}

impl PpoFactory {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        PpoFactory {
            hidden: config.hidden.clone(),
            hyper: config.ppo,
            e_max: config.e_max,
        }
    }
}

impl AgentFactory for PpoFactory {
    fn make(&self, cell: &CellSpec, _agent: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Agent>> {
        Ok(Box::new(PpoAgent::new(cell.signal, self.e_max, &self.hidden, self.hyper, rng)?))
    }
}

/// The agents of one trial together with their random streams and the
/// step-count update schedule.
pub struct Learners {
    agents: Vec<Box<dyn Agent>>,
    rngs: Vec<ChaCha8Rng>,
    steps_per_update: Option<usize>,
    pending: usize,
    updates: usize,
    total_steps: u64,
}

impl Learners {
    /// `steps_per_update = None` freezes the agents.
    pub fn new(agents: Vec<Box<dyn Agent>>, rngs: Vec<ChaCha8Rng>, steps_per_update: Option<usize>) -> Result<Self> {
        if agents.len() != rngs.len() {
            return param(format!("{} agents but {} random streams", agents.len(), rngs.len()));
        }
        if steps_per_update == Some(0) {
            return param("steps_per_update must be positive");
        }
        Ok(Learners {
            agents,
            rngs,
            steps_per_update,
            pending: 0,
            updates: 0,
            total_steps: 0,
        })
    }

    pub fn agents(&self) -> &[Box<dyn Agent>] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    fn update(&mut self, bootstrap: Option<&[Observation]>) -> Result<()> {
        let results: Vec<Result<()>> = self
            .agents
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .enumerate()
            .map(|(i, (agent, rng))| {
                agent
                    .learn(bootstrap.map(|b| &b[i]), rng as &mut dyn RngCore)
                    .map(|_| ())
                    .map_err(|e| match e {
                        Error::Numerical(m) => Error::Numerical(format!("agent {i}: {m}")),
                        other => other,
                    })
            })
            .collect();
        results.into_iter().collect::<Result<()>>()?;
        self.pending = 0;
        self.updates += 1;
        Ok(())
    }

    /// Learns from whatever experience is still buffered.
    pub fn flush(&mut self) -> Result<()> {
        if self.steps_per_update.is_some() && self.pending > 0 {
            self.update(None)?;
        }
        Ok(())
    }
}

/// Everything observed during one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub record: EpisodeRecord,
    /// `efforts[t][n]`.
    pub efforts: Vec<Vec<f64>>,
    pub signals: Vec<usize>,
    /// Stock at the start of each step, plus the final stock.
    pub stocks: Vec<f64>,
}

fn observations(state: &env::EnvState, signal: &SignalSource) -> Vec<Observation> {
    let g = signal.one_hot(state.t);
    state
        .last_efforts
        .iter()
        .zip(&state.last_rewards)
        .map(|(e, r)| Observation::new(*e, *r, g.clone()))
        .collect()
}

/// Plays one episode with all agents acting simultaneously each step.
pub fn run_episode(
    params: &EnvParams,
    learners: &mut Learners,
    signal: &SignalSource,
    episode: usize,
) -> Result<EpisodeOutcome> {
    params.validate()?;
    if learners.len() != params.n_agents {
        return param(format!(
            "{} agents for a fishery of {}",
            learners.len(),
            params.n_agents
        ));
    }
    if let Some(a) = learners.agents.iter().find(|a| a.signal_dim() != signal.cardinality()) {
        return param(format!(
            "agent expects a signal of size {}, source has {}",
            a.signal_dim(),
            signal.cardinality()
        ));
    }
    let n = params.n_agents;
    let mut state = env::reset(params);
    let mut returns = vec![0.0; n];
    let mut efforts_log = Vec::new();
    let mut signals = Vec::new();
    let mut stocks = vec![state.stock];
    let mut reason = None;

    while !state.done {
        let obs = observations(&state, signal);
        let mut decisions = Vec::with_capacity(n);
        for ((agent, rng), o) in learners.agents.iter_mut().zip(&mut learners.rngs).zip(&obs) {
            decisions.push(agent.decide(o, rng)?);
        }
        let efforts: Vec<f64> = decisions.iter().map(|d| d.effort).collect();
        let (next, out) = env::step(&state, &efforts, params)
            .map_err(|e| Error::State(format!("episode {episode}, step {}: {e}", state.t)))?;
        for (((agent, d), o), r) in learners.agents.iter_mut().zip(&decisions).zip(obs).zip(&out.rewards) {
            agent.record(Transition {
                obs: o.to_vec(),
                raw_action: d.raw_action,
                effort: d.effort,
                log_prob: d.log_prob,
                mean: d.mean,
                log_std: d.log_std,
                value: d.value,
                reward: *r,
                done: out.done,
            });
        }
        for (acc, r) in returns.iter_mut().zip(&out.rewards) {
            *acc += r;
        }
        signals.push(signal.hot_index(state.t));
        efforts_log.push(efforts);
        stocks.push(next.stock);
        learners.total_steps += 1;
        learners.pending += 1;
        if out.done {
            reason = Some(out.done_reason);
        }
        state = next;

        if learners.steps_per_update.is_some_and(|k| learners.pending >= k) {
            let bootstrap = (!state.done).then(|| observations(&state, signal));
            learners
                .update(bootstrap.as_deref())
                .map_err(|e| with_episode(e, episode))?;
        }
    }

    Ok(EpisodeOutcome {
        record: EpisodeRecord::new(episode, state.t, returns, reason),
        efforts: efforts_log,
        signals,
        stocks,
    })
}

fn with_episode(e: Error, episode: usize) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("episode {episode}, {m}")),
        other => other,
    }
}

/// Outcome of one trial of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub cell: CellSpec,
    pub trial: usize,
    pub seed: u64,
    /// Simulated episodes followed by extrapolated ones.
    pub episodes: Vec<EpisodeRecord>,
    pub simulated: usize,
    /// Episode count at which the convergence check first held.
    pub converged_at: Option<usize>,
    pub failure: Option<String>,
    /// Per-signal effort profile of the last simulated episode.
    pub profile: Option<EffortProfile>,
    /// Mean effort of each agent over the last reported simulated episodes.
    pub mean_efforts: Vec<f64>,
    /// Signal influence on each agent's final policy.
    pub cic: Vec<f64>,
    pub total_steps: u64,
    pub updates: usize,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

impl TrialResult {
    /// Episodes needed to converge, or the episodes run when the trial never did.
    pub fn convergence_time(&self) -> usize {
        self.converged_at.unwrap_or(self.simulated)
    }
}

/// Runs one trial with PPO agents.
pub fn run_trial(config: &ExperimentConfig, cell: &CellSpec, trial: usize) -> Result<TrialResult> {
    run_trial_with(config, cell, trial, &PpoFactory::from_config(config))
}

/// Runs one trial: trains until convergence or `max_episodes`, then fills
/// the remaining episodes with the mean of the convergence window.
///
/// Numerical failures during training end the trial early and are recorded
/// in [`TrialResult::failure`]; parameter errors are returned.
pub fn run_trial_with(
    config: &ExperimentConfig,
    cell: &CellSpec,
    trial: usize,
    factory: &dyn AgentFactory,
) -> Result<TrialResult> {
    let params = config.env_params(cell)?;
    params.validate()?;
    let seed = trial_seed(config.seed, &cell.seed_key(), trial);
    let mut signal_rng = trial_rng(seed);
    let mut rngs: Vec<ChaCha8Rng> = (0..cell.n_agents).map(|n| agent_rng(seed, n)).collect();
    let agents = rngs
        .iter_mut()
        .enumerate()
        .map(|(n, r)| factory.make(cell, n, r))
        .collect::<Result<Vec<_>>>()?;
    let mut learners = Learners::new(agents, rngs, Some(config.ppo.steps_per_update))?;

    let window = config.convergence.window;
    let mut episodes = Vec::new();
    let mut recent_efforts: std::collections::VecDeque<Vec<f64>> = Default::default();
    let mut profile = None;
    let mut converged_at = None;
    let mut failure = None;

    for ep in 0..config.max_episodes {
        let signal = SignalSource::random(cell.signal, &mut signal_rng)?;
        let outcome = match run_episode(&params, &mut learners, &signal, ep) {
            Ok(o) => o,
            Err(Error::Numerical(m)) => {
                failure = Some(m);
                break;
            }
            Err(e) => return Err(e),
        };
        let len = outcome.efforts.len().max(1) as f64;
        let means: Vec<f64> = (0..cell.n_agents)
            .map(|n| outcome.efforts.iter().map(|row| row[n]).sum::<f64>() / len)
            .collect();
        recent_efforts.push_back(means);
        if recent_efforts.len() > config.report_window {
            recent_efforts.pop_front();
        }
        profile = Some(per_signal_effort_profile(&outcome.efforts, &outcome.signals, cell.signal)?);
        episodes.push(outcome.record);
        if convergence_check(&episodes, config.t_max, &config.convergence) {
            converged_at = Some(ep + 1);
            break;
        }
    }
    let simulated = episodes.len();

    if let Some(k) = converged_at {
        let tail = episodes[k - window..k].to_vec();
        for ep in k..config.max_episodes {
            episodes.push(EpisodeRecord::extrapolated(ep, &tail));
        }
    }

    let mean_efforts = if recent_efforts.is_empty() {
        Vec::new()
    } else {
        (0..cell.n_agents)
            .map(|n| recent_efforts.iter().map(|m| m[n]).sum::<f64>() / recent_efforts.len() as f64)
            .collect()
    };

    let mut eval_rng = evaluation_rng(seed);
    let sampler = UniformPartialStates::new(config.e_max, config.price);
    let cic_values = if simulated == 0 || failure.is_some() {
        Vec::new()
    } else {
        learners
            .agents()
            .iter()
            .map(|a| cic(a.as_ref(), &sampler, &config.cic, &mut eval_rng))
            .collect::<Result<Vec<_>>>()?
    };

    let checkpoint = if config.checkpoints && failure.is_none() {
        let params: Option<Vec<_>> = learners.agents().iter().map(|a| a.params()).collect();
        params.map(Checkpoint::from_params).transpose()?
    } else {
        None
    };

    Ok(TrialResult {
        cell: *cell,
        trial,
        seed,
        episodes,
        simulated,
        converged_at,
        failure,
        profile,
        mean_efforts,
        cic: cic_values,
        total_steps: learners.total_steps(),
        updates: learners.updates(),
        checkpoint,
    })
}
