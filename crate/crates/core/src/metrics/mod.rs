//! Episode metrics, fairness indices, convergence detection and significance tests.

mod cic;
mod stats;

pub use cic::{cic, cic_exact, CicConfig, PartialStateSampler, UniformPartialStates};
pub use stats::{mean, student_t_test, TTest};

use serde::{Deserialize, Serialize};

use crate::env::DoneReason;
use crate::error::{domain, param, Result};

/// Summary of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Steps survived; fractional for extrapolated episodes.
    pub length: f64,
    pub social_welfare: f64,
    pub per_agent_returns: Vec<f64>,
    /// Jain index of the per-agent returns, `None` where undefined.
    pub jain: Option<f64>,
    pub gini: Option<f64>,
    /// `None` for episodes filled in by extrapolation after early stopping.
    pub done_reason: Option<DoneReason>,
}

impl EpisodeRecord {
    pub fn new(episode: usize, length: usize, per_agent_returns: Vec<f64>, done_reason: Option<DoneReason>) -> Self {
        EpisodeRecord {
            episode,
            length: length as f64,
            social_welfare: per_agent_returns.iter().sum(),
            jain: jain_index(&per_agent_returns).ok(),
            gini: gini_coefficient(&per_agent_returns).ok(),
            per_agent_returns,
            done_reason,
        }
    }

    /// Stand-in for an episode that was not simulated: every metric is the
    /// mean over `window`.
    pub fn extrapolated(episode: usize, window: &[EpisodeRecord]) -> Self {
        let avg = |f: &dyn Fn(&EpisodeRecord) -> f64| mean(&window.iter().map(f).collect::<Vec<_>>());
        let avg_opt = |f: &dyn Fn(&EpisodeRecord) -> Option<f64>| {
            let v: Vec<f64> = window.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| mean(&v))
        };
        let n = window.first().map_or(0, |e| e.per_agent_returns.len());
        EpisodeRecord {
            episode,
            length: avg(&|e| e.length),
            social_welfare: avg(&|e| e.social_welfare),
            per_agent_returns: (0..n).map(|i| avg(&|e| e.per_agent_returns[i])).collect(),
            jain: avg_opt(&|e| e.jain),
            gini: avg_opt(&|e| e.gini),
            done_reason: None,
        }
    }
}

fn check_allocation(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return param("allocation is empty");
    }
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return domain("allocation entries must be finite and nonnegative");
    }
    let total: f64 = x.iter().sum();
    if total == 0.0 {
        return domain("fairness index of an all-zero allocation is undefined");
    }
    Ok(total)
}

/// `(sum x)^2 / (N * sum x^2)`.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    let total = check_allocation(x)?;
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(total * total / (x.len() as f64 * sq))
}

/// Mean absolute difference over all ordered pairs, divided by twice the mean.
pub fn gini_coefficient(x: &[f64]) -> Result<f64> {
    let total = check_allocation(x)?;
    // sum over ordered pairs via sorted prefix sums
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let pairs: f64 = s
        .iter()
        .enumerate()
        .map(|(i, v)| (2.0 * i as f64 - n + 1.0) * v)
        .sum::<f64>()
        * 2.0;
    Ok(pairs / (2.0 * n * total))
}

/// `(with - without) / without`.
pub fn relative_difference(with_signal: f64, without: f64) -> Result<f64> {
    if without == 0.0 {
        return domain("relative difference against a zero baseline");
    }
    Ok((with_signal - without) / without)
}

/// Agent counts per access bin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessBins {
    pub idle: usize,
    pub moderate: usize,
    pub active: usize,
}

pub const IDLE_BOUND: f64 = 0.33;
pub const ACTIVE_BOUND: f64 = 0.66;

/// Bins agents by mean effort into `[0, 0.33)`, `[0.33, 0.66)` and `[0.66, 1]`
/// of `e_max`.
pub fn access_bins(mean_efforts: &[f64], e_max: f64) -> AccessBins {
    let mut bins = AccessBins::default();
    for &e in mean_efforts {
        let f = e / e_max;
        if f < IDLE_BOUND {
            bins.idle += 1;
        } else if f < ACTIVE_BOUND {
            bins.moderate += 1;
        } else {
            bins.active += 1;
        }
    }
    bins
}

/// Early-stopping rule applied to a training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub window: usize,
    /// Every episode in the window must last at least this fraction of `t_max`.
    pub min_length_fraction: f64,
    /// Allowed spread of the rolling-mean SW relative to the window mean.
    pub sw_tolerance: f64,
    /// Width of the rolling mean.
    pub rolling: usize,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria {
            window: 200,
            min_length_fraction: 0.95,
            sw_tolerance: 0.05,
            rolling: 10,
        }
    }
}

/// True when the last `window` episodes are all near full length and their
/// social welfare has settled.
pub fn convergence_check(history: &[EpisodeRecord], t_max: usize, criteria: &ConvergenceCriteria) -> bool {
    let w = criteria.window;
    if w == 0 || history.len() < w {
        return false;
    }
    let recent = &history[history.len() - w..];
    let min_len = criteria.min_length_fraction * t_max as f64;
    if recent.iter().any(|e| e.length < min_len) {
        return false;
    }
    let sw: Vec<f64> = recent.iter().map(|e| e.social_welfare).collect();
    let k = criteria.rolling.clamp(1, w);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut acc: f64 = sw[..k].iter().sum();
    for i in k..=w {
        let m = acc / k as f64;
        lo = lo.min(m);
        hi = hi.max(m);
        if i < w {
            acc += sw[i] - sw[i - k];
        }
    }
    let spread = hi - lo;
    let centre = mean(&sw).abs();
    if centre == 0.0 {
        return spread == 0.0;
    }
    spread / centre <= criteria.sw_tolerance + 1e-12
}

/// Mean effort of each agent at each signal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortProfile {
    /// `means[g][n]`, `None` where signal `g` never occurred.
    pub means: Vec<Vec<Option<f64>>>,
}

impl EffortProfile {
    pub fn cardinality(&self) -> usize {
        self.means.len()
    }

    pub fn absent(&self) -> Vec<usize> {
        self.means
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(Option::is_none))
            .map(|(g, _)| g)
            .collect()
    }
}

/// Averages `efforts[t][n]` over the steps at which the hot signal index was `g`.
pub fn per_signal_effort_profile(efforts: &[Vec<f64>], signals: &[usize], cardinality: usize) -> Result<EffortProfile> {
    if efforts.len() != signals.len() {
        return param(format!(
            "{} effort rows but {} signal indices",
            efforts.len(),
            signals.len()
        ));
    }
    let n = efforts.first().map_or(0, Vec::len);
    if efforts.iter().any(|row| row.len() != n) {
        return param("effort rows differ in agent count");
    }
    let mut sums = vec![vec![0.0; n]; cardinality];
    let mut counts = vec![0usize; cardinality];
    for (row, &g) in efforts.iter().zip(signals) {
        if g >= cardinality {
            return param(format!("signal index {g} outside cardinality {cardinality}"));
        }
        counts[g] += 1;
        for (s, e) in sums[g].iter_mut().zip(row) {
            *s += e;
        }
    }
    let means = sums
        .into_iter()
        .zip(counts)
        .map(|(row, c)| {
            row.into_iter()
                .map(|s| (c > 0).then(|| s / c as f64))
                .collect()
        })
        .collect();
    Ok(EffortProfile { means })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_gini(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let total: f64 = x.iter().sum();
        let pairs: f64 = x.iter().flat_map(|a| x.iter().map(move |b| (a - b).abs())).sum();
        pairs / (2.0 * n * total)
    }

    fn record(length: usize, sw: f64) -> EpisodeRecord {
        EpisodeRecord::new(0, length, vec![sw], Some(DoneReason::HorizonReached))
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[2.0; 5]).unwrap(), 1.0);
        assert_eq!(jain_index(&[0.0, 0.0, 3.0, 0.0]).unwrap(), 0.25);
        assert!((jain_index(&[1.0, 3.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(jain_index(&[0.0, 0.0]).is_err());
        assert!(jain_index(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini_coefficient(&[4.0; 3]).unwrap(), 0.0);
        assert_eq!(gini_coefficient(&[1.0, 0.0]).unwrap(), 0.5);
        assert!(gini_coefficient(&[0.0]).is_err());
    }

    #[test]
    fn relative_difference_examples() {
        assert_eq!(relative_difference(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(relative_difference(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(relative_difference(0.5, 1.0).unwrap(), -0.5);
        assert!(relative_difference(1.0, 0.0).is_err());
    }

    #[test]
    fn access_bin_examples() {
        assert_eq!(
            access_bins(&[0.0; 4], 1.0),
            AccessBins {
                idle: 4,
                moderate: 0,
                active: 0
            }
        );
        assert_eq!(
            access_bins(&[0.1, 0.5, 0.9], 1.0),
            AccessBins {
                idle: 1,
                moderate: 1,
                active: 1
            }
        );
        assert_eq!(access_bins(&[0.33], 1.0).moderate, 1);
        assert_eq!(access_bins(&[0.66], 1.0).active, 1);
        assert_eq!(access_bins(&[1.0], 1.0).active, 1);
    }

    #[test]
    fn convergence_examples() {
        let c = ConvergenceCriteria::default();
        let full: Vec<_> = (0..200).map(|_| record(500, 10.0)).collect();
        assert!(convergence_check(&full, 500, &c));
        assert!(!convergence_check(&full[..199], 500, &c));

        let mut depleted = full.clone();
        depleted[120] = record(40, 10.0);
        assert!(!convergence_check(&depleted, 500, &c));

        let drift: Vec<_> = (0..200).map(|i| record(500, 10.0 * (1.0 + 0.1 * i as f64 / 199.0))).collect();
        assert!(!convergence_check(&drift, 500, &c));

        let zero: Vec<_> = (0..200).map(|_| record(500, 0.0)).collect();
        assert!(convergence_check(&zero, 500, &c));
    }

    #[test]
    fn short_episodes_allowed_above_threshold() {
        let c = ConvergenceCriteria::default();
        let h: Vec<_> = (0..200).map(|_| record(475, 1.0)).collect();
        assert!(convergence_check(&h, 500, &c));
        let h: Vec<_> = (0..200).map(|_| record(474, 1.0)).collect();
        assert!(!convergence_check(&h, 500, &c));
    }

    #[test]
    fn profile_examples() {
        let efforts = vec![vec![0.4, 0.6]; 6];
        let p = per_signal_effort_profile(&efforts, &[0, 1, 2, 0, 1, 2], 3).unwrap();
        assert!(p.means.iter().flatten().all(|m| *m == Some(0.4) || *m == Some(0.6)));

        let turns: Vec<Vec<f64>> = (0..10)
            .map(|t| if t % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let sig: Vec<usize> = (0..10).map(|t| t % 2).collect();
        let p = per_signal_effort_profile(&turns, &sig, 2).unwrap();
        assert_eq!(p.means, vec![vec![Some(1.0), Some(0.0)], vec![Some(0.0), Some(1.0)]]);

        let p = per_signal_effort_profile(&efforts[..2], &[3, 4], 8).unwrap();
        assert_eq!(p.absent(), vec![0, 1, 2, 5, 6, 7]);
        assert!(per_signal_effort_profile(&efforts[..2], &[0], 2).is_err());
    }

    #[test]
    fn episode_record_sums_returns() {
        let r = EpisodeRecord::new(3, 10, vec![0.1, 0.2, 0.3], None);
        assert!((r.social_welfare - 0.6).abs() < 1e-15);
        assert!(r.jain.is_some());
        assert!(EpisodeRecord::new(0, 1, vec![0.0, 0.0], None).jain.is_none());
    }

    #[test]
    fn extrapolation_averages_window() {
        let w = vec![
            EpisodeRecord::new(0, 10, vec![1.0, 3.0], Some(DoneReason::HorizonReached)),
            EpisodeRecord::new(1, 9, vec![2.0, 2.0], Some(DoneReason::Depleted)),
        ];
        let e = EpisodeRecord::extrapolated(7, &w);
        assert_eq!(e.episode, 7);
        assert_eq!(e.length, 9.5);
        assert_eq!(e.social_welfare, 4.0);
        assert_eq!(e.per_agent_returns, vec![1.5, 2.5]);
        assert_eq!(e.jain, Some(0.9));
        assert_eq!(e.done_reason, None);
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_sum(x in prop::collection::vec(0.0f64..10.0, 1..20)) {
            prop_assume!(x.iter().sum::<f64>() > 1e-6);
            let g = gini_coefficient(&x).unwrap();
            prop_assert!((g - naive_gini(&x)).abs() < 1e-12);
        }

        #[test]
        fn fairness_bounds_and_scale_invariance(x in prop::collection::vec(0.0f64..10.0, 1..20), c in 0.01f64..100.0) {
            prop_assume!(x.iter().sum::<f64>() > 1e-6);
            let j = jain_index(&x).unwrap();
            let n = x.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            prop_assert!((gini_coefficient(&scaled).unwrap() - gini_coefficient(&x).unwrap()).abs() < 1e-12);
            prop_assert!((jain_index(&scaled).unwrap() - j).abs() < 1e-12);
        }

        #[test]
        fn convergence_monotone_in_tolerance(
            sw in prop::collection::vec(1.0f64..2.0, 200),
            t1 in 0.0f64..0.5,
            t2 in 0.0f64..0.5,
        ) {
            let h: Vec<_> = sw.iter().map(|s| record(100, *s)).collect();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let strict = ConvergenceCriteria { sw_tolerance: lo, ..ConvergenceCriteria::default() };
            let loose = ConvergenceCriteria { sw_tolerance: hi, ..ConvergenceCriteria::default() };
            prop_assert!(!convergence_check(&h, 100, &strict) || convergence_check(&h, 100, &loose));
        }

        #[test]
        fn bins_partition_agents(e in prop::collection::vec(0.0f64..=1.0, 0..30)) {
            let b = access_bins(&e, 1.0);
            prop_assert_eq!(b.idle + b.moderate + b.active, e.len());
        }
    }
}
