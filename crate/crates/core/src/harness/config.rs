//! Experiment configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::seq_from_multiplier;
use crate::env::EnvParams;
use crate::error::{param, Error, Result};
use crate::learner::{PpoHyper, DEFAULT_HIDDEN};
use crate::metrics::{CicConfig, ConvergenceCriteria};

/// Signal cardinality of a grid cell, either fixed or tied to the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalSpec {
    Fixed(usize),
    /// `G = N`.
    Population,
}

impl SignalSpec {
    pub fn resolve(self, n_agents: usize) -> usize {
        match self {
            SignalSpec::Fixed(g) => g,
            SignalSpec::Population => n_agents,
        }
    }
}

impl FromStr for SignalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("n") {
            return Ok(SignalSpec::Population);
        }
        match s.parse::<usize>() {
            Ok(g) if g > 0 => Ok(SignalSpec::Fixed(g)),
            _ => param(format!("signal cardinality must be a positive integer or N, got {s:?}")),
        }
    }
}

impl fmt::Display for SignalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSpec::Fixed(g) => write!(f, "{g}"),
            SignalSpec::Population => write!(f, "N"),
        }
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub n_agents: usize,
    pub m_s: f64,
    pub signal: usize,
}

impl CellSpec {
    /// Directory-safe identifier, unique within a grid.
    pub fn id(&self) -> String {
        format!("N{}_ms{}_G{}", self.n_agents, self.m_s, self.signal)
    }

    /// Key used for seeding. It leaves out the signal so that cells that
    /// differ only in `G` see the same seeds.
    pub fn seed_key(&self) -> String {
        format!("N{}/ms{:?}", self.n_agents, self.m_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub agents: Vec<usize>,
    pub ms: Vec<f64>,
    pub signals: Vec<SignalSpec>,
    pub growth_rate: f64,
    pub e_max: f64,
    pub price: f64,
    pub cost: f64,
    pub max_episodes: usize,
    pub t_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub ppo: PpoHyper,
    pub convergence: ConvergenceCriteria,
    pub cic: CicConfig,
    /// Number of final episodes averaged for reporting.
    pub report_window: usize,
    pub checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            agents: vec![8],
            ms: vec![0.5],
            signals: vec![SignalSpec::Fixed(1), SignalSpec::Population],
            growth_rate: 1.0,
            e_max: 1.0,
            price: 1.0,
            cost: 0.0,
            max_episodes: 5000,
            t_max: 500,
            trials: 8,
            seed: 0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            ppo: PpoHyper::default(),
            convergence: ConvergenceCriteria::default(),
            cic: CicConfig::default(),
            report_window: 10,
            checkpoints: false,
        }
    }
}

/// Keys accepted in configuration files, in the order they are written.
pub const CONFIG_KEYS: &[&str] = &[
    "agents",
    "ms",
    "signal",
    "growth-rate",
    "e-max",
    "price",
    "cost",
    "episodes",
    "tmax",
    "trials",
    "seed",
    "hidden",
    "learning-rate",
    "clip",
    "vf-clip",
    "kl-target",
    "gamma",
    "gae-lambda",
    "vf-coeff",
    "entropy-coeff",
    "epochs",
    "minibatch",
    "steps-per-update",
    "init-log-std",
    "window",
    "rolling",
    "sw-tolerance",
    "min-length",
    "cic-states",
    "cic-samples",
    "cic-bins",
    "report-window",
    "checkpoints",
];

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("cannot parse {key} = {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return param(format!("{key} must list at least one value"));
    }
    Ok(items)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one field from its configuration key. Underscores and hyphens
    /// are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let k = key.as_str();
        match k {
            "agents" => self.agents = parse_list(k, value)?,
            "ms" => self.ms = parse_list(k, value)?,
            "signal" => self.signals = parse_list(k, value)?,
            "growth-rate" => self.growth_rate = parse_one(k, value)?,
            "e-max" => self.e_max = parse_one(k, value)?,
            "price" => self.price = parse_one(k, value)?,
            "cost" => self.cost = parse_one(k, value)?,
            "episodes" => self.max_episodes = parse_one(k, value)?,
            "tmax" => self.t_max = parse_one(k, value)?,
            "trials" => self.trials = parse_one(k, value)?,
            "seed" => self.seed = parse_one(k, value)?,
            "hidden" => self.hidden = parse_list(k, value)?,
            "learning-rate" => self.ppo.learning_rate = parse_one(k, value)?,
            "clip" => self.ppo.clip = parse_one(k, value)?,
            "vf-clip" => self.ppo.vf_clip = parse_one(k, value)?,
            "kl-target" => self.ppo.kl_target = parse_one(k, value)?,
            "gamma" => self.ppo.gamma = parse_one(k, value)?,
            "gae-lambda" => self.ppo.gae_lambda = parse_one(k, value)?,
            "vf-coeff" => self.ppo.vf_coeff = parse_one(k, value)?,
            "entropy-coeff" => self.ppo.entropy_coeff = parse_one(k, value)?,
            "epochs" => self.ppo.epochs_per_update = parse_one(k, value)?,
            "minibatch" => self.ppo.minibatch_size = parse_one(k, value)?,
            "steps-per-update" => self.ppo.steps_per_update = parse_one(k, value)?,
            "init-log-std" => self.ppo.init_log_std = parse_one(k, value)?,
            "window" => self.convergence.window = parse_one(k, value)?,
            "rolling" => self.convergence.rolling = parse_one(k, value)?,
            "sw-tolerance" => self.convergence.sw_tolerance = parse_one(k, value)?,
            "min-length" => self.convergence.min_length_fraction = parse_one(k, value)?,
            "cic-states" => self.cic.n_states = parse_one(k, value)?,
            "cic-samples" => self.cic.n_samples = parse_one(k, value)?,
            "cic-bins" => self.cic.n_bins = parse_one(k, value)?,
            "report-window" => self.report_window = parse_one(k, value)?,
            "checkpoints" => self.checkpoints = parse_one(k, value)?,
            _ => return param(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let key = key.trim().replace('_', "-");
        Some(match key.as_str() {
            "agents" => join(&self.agents),
            "ms" => join(&self.ms),
            "signal" => join(&self.signals),
            "growth-rate" => self.growth_rate.to_string(),
            "e-max" => self.e_max.to_string(),
            "price" => self.price.to_string(),
            "cost" => self.cost.to_string(),
            "episodes" => self.max_episodes.to_string(),
            "tmax" => self.t_max.to_string(),
            "trials" => self.trials.to_string(),
            "seed" => self.seed.to_string(),
            "hidden" => join(&self.hidden),
            "learning-rate" => self.ppo.learning_rate.to_string(),
            "clip" => self.ppo.clip.to_string(),
            "vf-clip" => self.ppo.vf_clip.to_string(),
            "kl-target" => self.ppo.kl_target.to_string(),
            "gamma" => self.ppo.gamma.to_string(),
            "gae-lambda" => self.ppo.gae_lambda.to_string(),
            "vf-coeff" => self.ppo.vf_coeff.to_string(),
            "entropy-coeff" => self.ppo.entropy_coeff.to_string(),
            "epochs" => self.ppo.epochs_per_update.to_string(),
            "minibatch" => self.ppo.minibatch_size.to_string(),
            "steps-per-update" => self.ppo.steps_per_update.to_string(),
            "init-log-std" => self.ppo.init_log_std.to_string(),
            "window" => self.convergence.window.to_string(),
            "rolling" => self.convergence.rolling.to_string(),
            "sw-tolerance" => self.convergence.sw_tolerance.to_string(),
            "min-length" => self.convergence.min_length_fraction.to_string(),
            "cic-states" => self.cic.n_states.to_string(),
            "cic-samples" => self.cic.n_samples.to_string(),
            "cic-bins" => self.cic.n_bins.to_string(),
            "report-window" => self.report_window.to_string(),
            "checkpoints" => self.checkpoints.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return param(format!("line {}: expected key = value, got {line:?}", i + 1));
            };
            self.set(k, v)
                .map_err(|e| Error::Parameter(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_kv(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() || self.ms.is_empty() || self.signals.is_empty() {
            return param("agents, ms and signal grids must be nonempty");
        }
        if self.agents.contains(&0) {
            return param("agent counts must be positive");
        }
        if self.t_max == 0 {
            return param("tmax must be positive");
        }
        if self.report_window == 0 {
            return param("report-window must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return param("hidden layer widths must be positive");
        }
        self.ppo.validate()?;
        self.cic.validate()?;
        for cell in self.cells() {
            self.env_params(&cell)?.validate()?;
        }
        Ok(())
    }

    /// Grid cells in `agents × ms × signal` order, duplicates removed.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out: Vec<CellSpec> = Vec::new();
        for &n in &self.agents {
            for &m_s in &self.ms {
                for s in &self.signals {
                    let c = CellSpec {
                        n_agents: n,
                        m_s,
                        signal: s.resolve(n),
                    };
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    pub fn s_eq(&self, cell: &CellSpec) -> Result<f64> {
        seq_from_multiplier(cell.m_s, cell.n_agents, self.growth_rate, self.e_max)
    }

    pub fn env_params(&self, cell: &CellSpec) -> Result<EnvParams> {
        Ok(EnvParams::new(cell.n_agents, self.s_eq(cell)?, self.t_max)
            .with_growth_rate(self.growth_rate)
            .with_e_max(self.e_max)
            .with_price_cost(self.price, self.cost))
    }
}
