//! Closed-form theory of the max-effort game and simulated baselines.
//!
//! When every agent harvests at `e_max` the dynamics reduce to
//! `s' = beta s exp(r (1 - beta s / s_eq))` with `beta = 1 - N e_max / (2 s_eq)`.
//! Two thresholds on `s_eq` follow:
//!
//! - the limit of sustainable harvesting `e^r N e_max / (2 (e^r - 1))`, above
//!   which max effort never drains the stock;
//! - the limit of immediate depletion `N e_max / 2`, at or below which max
//!   effort takes the whole stock in the first step.

mod lambert;

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

pub use lambert::{lambert_w, Branch};

use crate::env::{self, DoneReason, EnvParams};
use crate::error::{domain, param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryLimits {
    pub n_agents: usize,
    pub growth_rate: f64,
    pub e_max: f64,
    pub s_lsh: f64,
    pub s_lid: f64,
    /// `K = S_LSH / N`.
    pub k_const: f64,
    /// `S_LID / S_LSH = (e^r - 1) / e^r`.
    pub ms_lid: f64,
}

impl TheoryLimits {
    pub fn compute(n_agents: usize, growth_rate: f64, e_max: f64) -> Result<Self> {
        Ok(TheoryLimits {
            n_agents,
            growth_rate,
            e_max,
            s_lsh: limit_sustainable_harvesting(n_agents, growth_rate, e_max)?,
            s_lid: limit_immediate_depletion(n_agents, e_max),
            k_const: k_constant(growth_rate, e_max)?,
            ms_lid: ms_of_lid(growth_rate)?,
        })
    }
}

/// `K = e^r e_max / (2 (e^r - 1))`, the per-agent sustainable-harvesting limit.
pub fn k_constant(r: f64, e_max: f64) -> Result<f64> {
    if r == 0.0 || !r.is_finite() {
        return domain(format!("growth rate must be finite and nonzero, got {r}"));
    }
    // e^r / (e^r - 1) = 1 / (1 - e^-r)
    Ok(e_max / (2.0 * -(-r).exp_m1()))
}

pub fn limit_sustainable_harvesting(n: usize, r: f64, e_max: f64) -> Result<f64> {
    Ok(n as f64 * k_constant(r, e_max)?)
}

pub fn limit_immediate_depletion(n: usize, e_max: f64) -> f64 {
    n as f64 * e_max / 2.0
}

/// Scarcity multiplier at which `s_eq` equals the immediate-depletion limit.
pub fn ms_of_lid(r: f64) -> Result<f64> {
    if r == 0.0 || r.is_nan() {
        return domain(format!("growth rate must be nonzero, got {r}"));
    }
    Ok(-(-r).exp_m1())
}

/// `s_eq = M_s K N`.
pub fn seq_from_multiplier(m_s: f64, n: usize, r: f64, e_max: f64) -> Result<f64> {
    if m_s < 0.0 || !m_s.is_finite() {
        return param(format!("scarcity multiplier must be nonnegative, got {m_s}"));
    }
    Ok(m_s * k_constant(r, e_max)? * n as f64)
}

/// Growth rates between which the spawner-recruit peak stays below `2 s_eq`.
///
/// Both ends solve `e^r = 2 e r`.
pub fn growth_rate_bounds() -> (f64, f64) {
    let x = -1.0 / (2.0 * E);
    let lo = -lambert_w(Branch::Principal, x).expect("-1/2e is inside the principal domain");
    let hi = -lambert_w(Branch::Lower, x).expect("-1/2e is inside the lower domain");
    (lo, hi)
}

/// `beta e^r - 1` for the all-max-effort linearisation; positive iff the
/// stock grows near zero, i.e. iff `s_eq > S_LSH`.
pub fn sustainability_margin(n: usize, r: f64, e_max: f64, s_eq: f64) -> f64 {
    let beta = 1.0 - n as f64 * e_max / (2.0 * s_eq);
    beta * r.exp() - 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub length: usize,
    pub social_welfare: f64,
    /// Stock before every step, followed by the final stock.
    pub stock_trajectory: Vec<f64>,
    pub done_reason: DoneReason,
}

impl BaselineRun {
    pub fn survived(&self) -> bool {
        self.done_reason != DoneReason::Depleted
    }
}

/// Every agent applies the same constant effort until depletion or `horizon`.
pub fn constant_effort_baseline(params: &EnvParams, horizon: usize, effort: f64) -> Result<BaselineRun> {
    let mut p = params.clone();
    p.max_steps = horizon;
    p.validate()?;
    if !(0.0..=p.e_max).contains(&effort) {
        return param(format!("effort {effort} outside [0, {}]", p.e_max));
    }
    let efforts = vec![effort; p.n_agents];
    let mut state = env::reset(&p);
    let mut trajectory = vec![state.stock];
    let mut sw = 0.0;
    let mut reason = DoneReason::Running;
    while !state.done {
        let (next, out) = env::step(&state, &efforts, &p)?;
        sw += out.rewards.iter().sum::<f64>();
        reason = out.done_reason;
        trajectory.push(next.stock);
        state = next;
    }
    Ok(BaselineRun {
        length: state.t,
        social_welfare: sw,
        stock_trajectory: trajectory,
        done_reason: reason,
    })
}

/// All agents harvest at `e_max` every step.
pub fn max_effort_baseline(params: &EnvParams, horizon: usize) -> Result<BaselineRun> {
    constant_effort_baseline(params, horizon, params.e_max)
}

/// Smallest `s_eq` on an ascending grid for which max effort survives the
/// whole horizon (unit price, zero cost, threshold `1e-4`). `None` when no
/// grid point survives.
pub fn empirical_lsh(n: usize, r: f64, e_max: f64, horizon: usize, s_grid: &[f64]) -> Result<Option<f64>> {
    if s_grid.is_empty() {
        return param("empty s_eq grid");
    }
    if s_grid.windows(2).any(|w| w[1] < w[0]) {
        return param("s_eq grid must be ascending");
    }
    for &s_eq in s_grid {
        let p = EnvParams::new(n, s_eq, horizon)
            .with_growth_rate(r)
            .with_e_max(e_max);
        if max_effort_baseline(&p, horizon)?.survived() {
            return Ok(Some(s_eq));
        }
    }
    Ok(None)
}

/// Grid `[lo, hi]` in steps of `0.01 K N`, the resolution used for the
/// finite-horizon sustainability check.
pub fn lsh_grid(n: usize, r: f64, e_max: f64, lo_ms: f64, hi_ms: f64) -> Result<Vec<f64>> {
    let kn = k_constant(r, e_max)? * n as f64;
    let steps = ((hi_ms - lo_ms) / 0.01).round() as usize;
    Ok((0..=steps).map(|i| (lo_ms + 0.01 * i as f64) * kn).collect())
}
