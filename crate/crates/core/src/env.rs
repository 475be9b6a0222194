//! Bio-economic fishery model.
//!
//! A single renewable stock is harvested by `N` appropriators. The total
//! harvest depends on the summed effort and on a stock-dependent
//! catchability; the post-harvest stock regrows through a Ricker-type
//! spawner-recruit map.

use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};

/// Admissible growth-rate interval, `[-W0(-1/2e), -W-1(-1/2e)]`.
///
/// Inside this interval the unharvested stock never exceeds `2 * s_eq` when
/// started at or below that level. See [`crate::analytics::growth_rate_bounds`]
/// for the exact values.
pub const GROWTH_RATE_RANGE: (f64, f64) = (0.232, 2.678);

/// Depletion threshold used throughout the experiments.
pub const DEFAULT_DEPLETION_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub n_agents: usize,
    /// Equilibrium stock, the fixed point of the spawner-recruit map.
    pub s_eq: f64,
    pub growth_rate: f64,
    /// Per-agent maximum effort.
    pub e_max: f64,
    /// Price per unit of harvested resource.
    pub price: f64,
    /// Fixed per-step cost charged to every agent.
    pub cost: f64,
    pub depletion_threshold: f64,
    pub max_steps: usize,
    /// Skip the growth-rate range check. Only meant for demonstrating
    /// what happens outside the admissible interval.
    #[serde(default)]
    pub allow_unbounded_growth: bool,
}

impl EnvParams {
    /// Parameters of the reference setting: unit price, zero cost, `r = 1`,
    /// `e_max = 1`, depletion threshold `1e-4`.
    pub fn new(n_agents: usize, s_eq: f64, max_steps: usize) -> Self {
        EnvParams {
            n_agents,
            s_eq,
            growth_rate: 1.0,
            e_max: 1.0,
            price: 1.0,
            cost: 0.0,
            depletion_threshold: DEFAULT_DEPLETION_THRESHOLD,
            max_steps,
            allow_unbounded_growth: false,
        }
    }

    pub fn with_growth_rate(mut self, r: f64) -> Self {
        self.growth_rate = r;
        self
    }

    pub fn with_e_max(mut self, e_max: f64) -> Self {
        self.e_max = e_max;
        self
    }

    pub fn with_price_cost(mut self, price: f64, cost: f64) -> Self {
        self.price = price;
        self.cost = cost;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return param("n_agents must be positive");
        }
        if !(self.s_eq > 0.0 && self.s_eq.is_finite()) {
            return param(format!("s_eq must be positive, got {}", self.s_eq));
        }
        if !(self.e_max > 0.0 && self.e_max.is_finite()) {
            return param(format!("e_max must be positive, got {}", self.e_max));
        }
        if !(self.depletion_threshold > 0.0) {
            return param("depletion_threshold must be positive");
        }
        if self.max_steps == 0 {
            return param("max_steps must be positive");
        }
        if !self.growth_rate.is_finite() {
            return param("growth_rate must be finite");
        }
        let (lo, hi) = GROWTH_RATE_RANGE;
        if !self.allow_unbounded_growth && !(lo..=hi).contains(&self.growth_rate) {
            return param(format!(
                "growth_rate {} outside admissible range [{lo}, {hi}]",
                self.growth_rate
            ));
        }
        if !self.price.is_finite() || !self.cost.is_finite() {
            return param("price and cost must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DoneReason {
    Depleted,
    HorizonReached,
    Running,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Depleted => "Depleted",
            DoneReason::HorizonReached => "HorizonReached",
            DoneReason::Running => "Running",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub stock: f64,
    pub t: usize,
    pub last_efforts: Vec<f64>,
    pub last_rewards: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub harvests: Vec<f64>,
    pub total_harvest: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// Catchability `q(x)`: `x / (2 s_eq)` up to `2 s_eq`, then saturating at 1.
pub fn catchability(stock: f64, s_eq: f64) -> Result<f64> {
    if !(s_eq > 0.0) {
        return param(format!("s_eq must be positive, got {s_eq}"));
    }
    if stock < 0.0 {
        return domain(format!("negative stock {stock}"));
    }
    Ok(catchability_unchecked(stock, s_eq))
}

#[inline]
pub(crate) fn catchability_unchecked(stock: f64, s_eq: f64) -> f64 {
    if stock <= 2.0 * s_eq {
        stock / (2.0 * s_eq)
    } else {
        1.0
    }
}

/// Total harvest `min(q(s) E, s)`.
pub fn total_harvest(total_effort: f64, stock: f64, s_eq: f64) -> Result<f64> {
    if total_effort < 0.0 || !total_effort.is_finite() {
        return param(format!("total effort must be nonnegative, got {total_effort}"));
    }
    let q = catchability(stock, s_eq)?;
    Ok((q * total_effort).min(stock))
}

/// Ricker spawner-recruit map `x exp(r (1 - x / s_eq))`.
pub fn spawner_recruit(x: f64, s_eq: f64, r: f64) -> Result<f64> {
    if x < 0.0 {
        return domain(format!("spawner-recruit evaluated at negative stock {x}"));
    }
    if !(s_eq > 0.0) {
        return param(format!("s_eq must be positive, got {s_eq}"));
    }
    Ok(spawner_recruit_unchecked(x, s_eq, r))
}

#[inline]
pub(crate) fn spawner_recruit_unchecked(x: f64, s_eq: f64, r: f64) -> f64 {
    x * (r * (1.0 - x / s_eq)).exp()
}

/// Initial state: stock at equilibrium, zeroed history.
pub fn reset(params: &EnvParams) -> EnvState {
    EnvState {
        stock: params.s_eq,
        t: 0,
        last_efforts: vec![0.0; params.n_agents],
        last_rewards: vec![0.0; params.n_agents],
        done: false,
    }
}

/// Advance the fishery by one step under the given per-agent efforts.
pub fn step(state: &EnvState, efforts: &[f64], params: &EnvParams) -> Result<(EnvState, StepOutcome)> {
    if state.done {
        return Err(Error::State(format!("episode already finished at t = {}", state.t)));
    }
    if efforts.len() != params.n_agents {
        return param(format!(
            "expected {} efforts, got {}",
            params.n_agents,
            efforts.len()
        ));
    }
    if let Some((n, e)) = efforts
        .iter()
        .enumerate()
        .find(|(_, e)| !(**e >= 0.0 && **e <= params.e_max))
    {
        return param(format!("effort {e} of agent {n} outside [0, {}]", params.e_max));
    }

    let total_effort: f64 = efforts.iter().sum();
    let harvest = total_harvest(total_effort, state.stock, params.s_eq)?;
    let harvests: Vec<f64> = if total_effort > 0.0 {
        efforts.iter().map(|e| e / total_effort * harvest).collect()
    } else {
        vec![0.0; efforts.len()]
    };
    let rewards: Vec<f64> = harvests
        .iter()
        .map(|h| params.price * h - params.cost)
        .collect();

    let remaining = (state.stock - harvest).max(0.0);
    let next_stock = spawner_recruit_unchecked(remaining, params.s_eq, params.growth_rate);
    let t = state.t + 1;
    let done_reason = if next_stock < params.depletion_threshold {
        DoneReason::Depleted
    } else if t >= params.max_steps {
        DoneReason::HorizonReached
    } else {
        DoneReason::Running
    };
    let done = done_reason != DoneReason::Running;

    let next = EnvState {
        stock: next_stock,
        t,
        last_efforts: efforts.to_vec(),
        last_rewards: rewards.clone(),
        done,
    };
    Ok((
        next,
        StepOutcome {
            rewards,
            harvests,
            total_harvest: harvest,
            done,
            done_reason,
        },
    ))
}
