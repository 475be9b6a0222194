//! Single-owner optimal harvesting.
//!
//! One controller chooses the total effort `E_k` in `{0, E_total_max}` for
//! each of `T` steps to maximise undiscounted revenue. The state is the
//! post-harvest stock `w_k = s_k - q(s_k) E_k`, with `s_k = F(w_{k-1})` and
//! `w_{-1} = s_eq`. The Hamiltonian of step `k` is
//!
//! ```text
//! H_k = (p_k - lambda_k) q(F(w_{k-1})) E_k - c_k + lambda_k F(w_{k-1})
//! ```
//!
//! which is linear in `E_k`, so the maximising effort is bang-bang in the
//! sign of `(p_k - lambda_k) q(s_k)`. The costates follow
//! `lambda_{k-1} = dH_k / dw_{k-1}` backwards from `lambda_{T-1} = 0`.
//!
//! Costates are stored shifted by one: `lambdas[j]` holds `lambda_{j-1}`, so
//! `lambdas` has `T + 1` entries, `lambdas[T] = 0`, and step `k` switches on
//! `lambdas[k + 1]`.

use serde::{Deserialize, Serialize};

use crate::env::{catchability_unchecked, spawner_recruit_unchecked, EnvParams, DEFAULT_DEPLETION_THRESHOLD};
use crate::error::{param, Result};

/// Largest horizon accepted by [`brute_force_optimal`].
pub const MAX_BRUTE_FORCE_HORIZON: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub s_eq: f64,
    pub growth_rate: f64,
    /// Maximum total effort, `N e_max`.
    pub e_total_max: f64,
    /// Price for each of the `T` decision steps.
    pub prices: Vec<f64>,
    /// Cost for each of the `T` decision steps.
    pub costs: Vec<f64>,
    pub depletion_threshold: f64,
}

impl ControlProblem {
    pub fn new(s_eq: f64, growth_rate: f64, e_total_max: f64, horizon: usize, price: f64, cost: f64) -> Self {
        ControlProblem {
            s_eq,
            growth_rate,
            e_total_max,
            prices: vec![price; horizon],
            costs: vec![cost; horizon],
            depletion_threshold: DEFAULT_DEPLETION_THRESHOLD,
        }
    }

    /// The pooled problem for an `N`-agent fishery with constant price and cost.
    pub fn from_env(params: &EnvParams, horizon: usize) -> Self {
        let mut p = ControlProblem::new(
            params.s_eq,
            params.growth_rate,
            params.n_agents as f64 * params.e_max,
            horizon,
            params.price,
            params.cost,
        );
        p.depletion_threshold = params.depletion_threshold;
        p
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    fn validate(&self) -> Result<()> {
        if self.prices.is_empty() {
            return param("horizon must be at least 1");
        }
        if self.prices.len() != self.costs.len() {
            return param("price and cost schedules differ in length");
        }
        if !(self.s_eq > 0.0) || !(self.e_total_max >= 0.0) || !self.growth_rate.is_finite() {
            return param("s_eq must be positive, e_total_max nonnegative, growth rate finite");
        }
        Ok(())
    }

    fn q(&self, x: f64) -> f64 {
        if x <= 0.0 {
            // unclamped dynamics can produce negative stock; q stays linear there
            x / (2.0 * self.s_eq)
        } else {
            catchability_unchecked(x, self.s_eq)
        }
    }

    /// Left derivative of `q`; at the kink `x = 2 s_eq` the linear piece is used.
    fn dq(&self, x: f64) -> f64 {
        if x <= 2.0 * self.s_eq {
            1.0 / (2.0 * self.s_eq)
        } else {
            0.0
        }
    }

    fn growth(&self, w: f64) -> f64 {
        spawner_recruit_unchecked(w, self.s_eq, self.growth_rate)
    }

    fn dgrowth(&self, w: f64) -> f64 {
        let r = self.growth_rate;
        (r * (1.0 - w / self.s_eq)).exp() * (1.0 - r * w / self.s_eq)
    }

    /// Hamiltonian of decision step `step` given the previous post-harvest
    /// stock `w_prev`, the effort and the costate of the resulting state.
    pub fn hamiltonian(&self, step: usize, w_prev: f64, effort: f64, lambda: f64) -> f64 {
        let s = self.growth(w_prev);
        (self.prices[step] - lambda) * self.q(s) * effort - self.costs[step] + lambda * s
    }

    /// `dH_step / dw_prev`, the backward costate update.
    pub fn hamiltonian_dw(&self, step: usize, w_prev: f64, effort: f64, lambda: f64) -> f64 {
        let s = self.growth(w_prev);
        ((self.prices[step] - lambda) * self.dq(s) * effort + lambda) * self.dgrowth(w_prev)
    }

    /// Realised revenue of a schedule under the simulator semantics: harvest
    /// clamped at the stock and the episode stops once the stock falls below
    /// the depletion threshold.
    pub fn objective(&self, efforts: &[f64]) -> f64 {
        let mut s = self.s_eq;
        let mut total = 0.0;
        for (k, &e) in efforts.iter().enumerate() {
            let h = (catchability_unchecked(s, self.s_eq) * e).min(s);
            total += self.prices[k] * h - self.costs[k];
            s = self.growth((s - h).max(0.0));
            if s < self.depletion_threshold {
                break;
            }
        }
        total
    }

    /// Forward pass with the unclamped harvest `q(s) E`: returns the stock
    /// before each decision and the post-harvest stocks.
    fn forward(&self, efforts: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = efforts.len();
        let mut stocks = Vec::with_capacity(t);
        let mut post = Vec::with_capacity(t);
        let mut w_prev = self.s_eq;
        for &e in efforts {
            let s = self.growth(w_prev);
            let w = s - self.q(s) * e;
            stocks.push(s);
            post.push(w);
            w_prev = w;
        }
        (stocks, post)
    }

    fn backward(&self, efforts: &[f64], post: &[f64]) -> Vec<f64> {
        let t = efforts.len();
        let mut lambdas = vec![0.0; t + 1];
        for k in (0..t).rev() {
            let w_prev = if k == 0 { self.s_eq } else { post[k - 1] };
            lambdas[k] = self.hamiltonian_dw(k, w_prev, efforts[k], lambdas[k + 1]);
        }
        lambdas
    }

    /// Switching coefficients `(p_k - lambda_k) q(s_k)` for every step.
    pub fn switching_coefficients(&self, stocks: &[f64], lambdas: &[f64]) -> Vec<f64> {
        stocks
            .iter()
            .enumerate()
            .map(|(k, &s)| (self.prices[k] - lambdas[k + 1]) * self.q(s))
            .collect()
    }
}

/// `e_total_max` when the switching coefficient is nonnegative, else 0.
pub fn bang_bang_action(coefficient: f64, e_total_max: f64) -> f64 {
    if coefficient >= 0.0 {
        e_total_max
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepStatus {
    Converged { iterations: usize },
    /// The schedule and costates returned to the state of two iterations ago.
    Oscillating { iterations: usize },
    MaxIterations,
    /// A costate or stock became non-finite.
    Diverged { iterations: usize },
}

impl SweepStatus {
    pub fn converged(&self) -> bool {
        matches!(self, SweepStatus::Converged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointSchedule {
    pub lambdas: Vec<f64>,
    pub efforts: Vec<f64>,
    pub post_harvest_stock: Vec<f64>,
    pub objective: f64,
    pub status: SweepStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the freshly computed costates when blending.
    pub damping: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            tol: 1e-9,
            max_iter: 10_000,
            damping: 0.5,
        }
    }
}

/// Forward-backward sweep for the bang-bang schedule.
///
/// Starts from full effort everywhere. Each iteration runs the state
/// forward under the current schedule, integrates the costates backwards,
/// blends them with the previous costates and re-derives the schedule from
/// the switching coefficients. On convergence the returned schedule is the
/// fixed point; otherwise the best schedule seen (by realised objective) is
/// returned together with the failure status.
pub fn forward_backward_sweep(problem: &ControlProblem, opts: SweepOptions) -> Result<AdjointSchedule> {
    problem.validate()?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return param(format!("damping must lie in (0, 1], got {}", opts.damping));
    }
    let t = problem.horizon();
    let e_max = problem.e_total_max;

    let mut efforts = vec![e_max; t];
    let mut lambdas = vec![0.0; t + 1];
    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;

    let finish = |efforts: Vec<f64>, lambdas: Vec<f64>, status: SweepStatus| {
        let (_, post) = problem.forward(&efforts);
        AdjointSchedule {
            objective: problem.objective(&efforts),
            lambdas,
            efforts,
            post_harvest_stock: post,
            status,
        }
    };

    for iter in 0..opts.max_iter {
        let objective = problem.objective(&efforts);
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, efforts.clone()));
        }

        let (stocks, post) = problem.forward(&efforts);
        let fresh = problem.backward(&efforts, &post);
        if fresh.iter().chain(&stocks).any(|x| !x.is_finite()) {
            let (_, e) = best.take().expect("best is set on the first iteration");
            let l = problem.backward(&e, &problem.forward(&e).1);
            return Ok(finish(e, l, SweepStatus::Diverged { iterations: iter + 1 }));
        }
        let change = fresh
            .iter()
            .zip(&lambdas)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let blended: Vec<f64> = fresh
            .iter()
            .zip(&lambdas)
            .map(|(new, old)| opts.damping * new + (1.0 - opts.damping) * old)
            .collect();
        let next: Vec<f64> = problem
            .switching_coefficients(&stocks, &blended)
            .into_iter()
            .map(|c| bang_bang_action(c, e_max))
            .collect();

        if next == efforts && change < opts.tol {
            return Ok(finish(efforts, fresh, SweepStatus::Converged { iterations: iter + 1 }));
        }
        if history.len() >= 2 {
            let (e2, l2) = &history[history.len() - 2];
            let l_gap = blended
                .iter()
                .zip(l2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if *e2 == next && next != efforts && l_gap < opts.tol {
                let (_, e) = best.take().expect("best is set on the first iteration");
                let l = problem.backward(&e, &problem.forward(&e).1);
                return Ok(finish(e, l, SweepStatus::Oscillating { iterations: iter + 1 }));
            }
        }
        history.push((next.clone(), blended.clone()));
        if history.len() > 2 {
            history.remove(0);
        }
        efforts = next;
        lambdas = blended;
    }

    let (_, e) = best.expect("max_iter > 0 sets best");
    let l = problem.backward(&e, &problem.forward(&e).1);
    Ok(finish(e, l, SweepStatus::MaxIterations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub efforts: Vec<f64>,
    pub objective: f64,
}

/// Exhaustive search over all `2^T` bang-bang schedules.
///
/// Ties are broken toward harvesting as early as possible.
pub fn brute_force_optimal(problem: &ControlProblem) -> Result<OracleSolution> {
    problem.validate()?;
    let t = problem.horizon();
    if t > MAX_BRUTE_FORCE_HORIZON {
        return param(format!(
            "brute force limited to T <= {MAX_BRUTE_FORCE_HORIZON}, got {t}"
        ));
    }
    let e_max = problem.e_total_max;
    // Bit t-1-k of the mask is step k, so counting the mask down visits
    // schedules in lexicographic order with harvesting first.
    let decode = |mask: u32| -> Vec<f64> {
        (0..t)
            .map(|k| if mask >> (t - 1 - k) & 1 == 1 { e_max } else { 0.0 })
            .collect()
    };
    let mut best_mask = (1u32 << t) - 1;
    let mut best_obj = problem.objective(&decode(best_mask));
    for mask in (0..best_mask).rev() {
        let obj = problem.objective(&decode(mask));
        if obj > best_obj + 1e-12 * best_obj.abs().max(1e-300) {
            best_obj = obj;
            best_mask = mask;
        }
    }
    Ok(OracleSolution {
        efforts: decode(best_mask),
        objective: best_obj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(t: usize) -> ControlProblem {
        ControlProblem::new(1.0, 1.0, 1.0, t, 1.0, 0.0)
    }

    #[test]
    fn hamiltonian_examples() {
        let p = ControlProblem::new(2.0, 1.3, 3.0, 4, 1.5, 0.2);
        let w = 1.1;
        let s = spawner_recruit_unchecked(w, 2.0, 1.3);
        let q = s / 4.0;
        let no_cost = ControlProblem::new(2.0, 1.3, 3.0, 4, 1.5, 0.0);
        assert!((no_cost.hamiltonian(0, w, 2.0, 0.0) - 1.5 * q * 2.0).abs() < 1e-14);
        assert!((p.hamiltonian(1, w, 0.0, 0.7) - (-0.2 + 0.7 * s)).abs() < 1e-14);
        let h0 = p.hamiltonian(2, w, 0.0, 0.4);
        let h1 = p.hamiltonian(2, w, 1.3, 0.4);
        let h2 = p.hamiltonian(2, w, 2.6, 0.4);
        assert!(((h2 - h0) - 2.0 * (h1 - h0)).abs() < 1e-13);
    }

    #[test]
    fn costate_derivative_matches_finite_difference() {
        let p = ControlProblem::new(1.7, 1.2, 2.0, 3, 1.0, 0.1);
        for &(w, e, l) in &[(0.4, 2.0, 0.3), (1.5, 0.0, 1.2), (2.2, 2.0, -0.4)] {
            let h = 1e-6;
            let fd = (p.hamiltonian(0, w + h, e, l) - p.hamiltonian(0, w - h, e, l)) / (2.0 * h);
            let an = p.hamiltonian_dw(0, w, e, l);
            assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }

    #[test]
    fn bang_bang_examples() {
        assert_eq!(bang_bang_action(0.0, 4.0), 4.0);
        assert_eq!(bang_bang_action(-1e-12, 4.0), 0.0);
        assert_eq!(bang_bang_action(0.3, 4.0), 4.0);
    }

    #[test]
    fn single_step_harvests() {
        let sched = forward_backward_sweep(&unit(1), SweepOptions::default()).unwrap();
        assert!(sched.status.converged());
        assert_eq!(sched.efforts, vec![1.0]);
        assert_eq!(sched.lambdas.len(), 2);
        assert_eq!(sched.lambdas[1], 0.0);
        let oracle = brute_force_optimal(&unit(1)).unwrap();
        assert_eq!(oracle.efforts, vec![1.0]);
        assert!((oracle.objective - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_price_is_worthless() {
        let p = ControlProblem::new(1.0, 1.0, 1.0, 6, 0.0, 0.0);
        let oracle = brute_force_optimal(&p).unwrap();
        assert_eq!(oracle.objective, 0.0);
        assert_eq!(p.objective(&[0.0; 6]), 0.0);
        let sched = forward_backward_sweep(&p, SweepOptions::default()).unwrap();
        assert_eq!(sched.objective, 0.0);
    }

    #[test]
    fn idle_schedule_pays_costs() {
        let p = ControlProblem::new(1.0, 1.0, 1.0, 5, 1.0, 0.3);
        assert!((p.objective(&[0.0; 5]) + 5.0 * 0.3).abs() < 1e-14);
    }

    #[test]
    fn longer_horizon_never_worse() {
        let one = brute_force_optimal(&unit(1)).unwrap();
        let two = brute_force_optimal(&unit(2)).unwrap();
        let mut ext = one.efforts.clone();
        ext.push(0.0);
        assert!(two.objective >= unit(2).objective(&ext));
    }

    #[test]
    fn brute_force_rejects_long_horizon() {
        assert!(brute_force_optimal(&unit(17)).is_err());
        assert!(forward_backward_sweep(&unit(0), SweepOptions::default()).is_err());
    }

    #[test]
    fn converged_short_horizon_matches_oracle() {
        let p = unit(3);
        let sched = forward_backward_sweep(&p, SweepOptions::default()).unwrap();
        assert!(sched.status.converged());
        let oracle = brute_force_optimal(&p).unwrap();
        assert!((sched.objective - oracle.objective).abs() < 1e-12);
    }

    #[test]
    fn no_self_consistent_bang_bang_schedule_at_unit_ten_steps() {
        // The unconstrained optimum here has a singular interior arc, so no
        // pure bang-bang schedule satisfies the costate switching rule.
        let p = unit(10);
        let mut consistent = 0;
        for mask in 0u32..1024 {
            let e: Vec<f64> = (0..10).map(|k| f64::from(mask >> k & 1)).collect();
            let (stocks, post) = p.forward(&e);
            let l = p.backward(&e, &post);
            let implied: Vec<f64> = p
                .switching_coefficients(&stocks, &l)
                .into_iter()
                .map(|c| bang_bang_action(c, 1.0))
                .collect();
            if implied == e {
                consistent += 1;
            }
        }
        assert_eq!(consistent, 0);
        let sched = forward_backward_sweep(&p, SweepOptions::default()).unwrap();
        assert!(!sched.status.converged());
        let oracle = brute_force_optimal(&p).unwrap();
        assert!((sched.objective - oracle.objective).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sweep_properties(
            s_eq in 0.3f64..3.0,
            r in 0.25f64..2.6,
            e in 0.2f64..3.0,
            t in 1usize..=10,
        ) {
            let p = ControlProblem::new(s_eq, r, e, t, 1.0, 0.0);
            let sched = forward_backward_sweep(&p, SweepOptions { max_iter: 2000, ..Default::default() }).unwrap();
            prop_assert_eq!(sched.lambdas.len(), t + 1);
            prop_assert_eq!(sched.lambdas[t], 0.0);
            prop_assert!(sched.efforts.iter().all(|x| *x == 0.0 || *x == e));
            let oracle = brute_force_optimal(&p).unwrap();
            if sched.status.converged() {
                prop_assert!(sched.objective >= (1.0 - 1e-6) * oracle.objective);
                let (stocks, _) = p.forward(&sched.efforts);
                let implied: Vec<f64> = p
                    .switching_coefficients(&stocks, &sched.lambdas)
                    .into_iter()
                    .map(|c| bang_bang_action(c, e))
                    .collect();
                prop_assert_eq!(&implied, &sched.efforts);
            }
        }

        #[test]
        fn oracle_dominates(
            s_eq in 0.3f64..3.0,
            r in 0.25f64..2.6,
            e in 0.2f64..3.0,
            t in 1usize..=8,
            mask in 0u32..256,
        ) {
            let p = ControlProblem::new(s_eq, r, e, t, 1.0, 0.05);
            let oracle = brute_force_optimal(&p).unwrap();
            let sched: Vec<f64> = (0..t).map(|k| if mask >> k & 1 == 1 { e } else { 0.0 }).collect();
            prop_assert!(p.objective(&sched) <= oracle.objective + 1e-12);
        }
    }
}
