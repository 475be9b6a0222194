//! Grid experiments: every cell × trial, aggregated and compared against
//! the matching no-signal cell.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CellSpec, ExperimentConfig};
use super::rollout::{run_trial_with, trial_seed, AgentFactory, PpoFactory, TrialResult};
use crate::analytics::TheoryLimits;
use crate::error::Result;
use crate::metrics::{access_bins, mean, relative_difference, student_t_test};

pub const FORMAT_VERSION: u32 = 1;

/// Last-window averages of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub social_welfare: f64,
    pub length: f64,
    pub convergence_time: f64,
    pub jain: Option<f64>,
    pub gini: Option<f64>,
    pub cic: Option<f64>,
}

impl TrialSummary {
    /// `None` for failed or empty trials.
    pub fn of(trial: &TrialResult, window: usize) -> Option<Self> {
        if trial.failure.is_some() || trial.episodes.is_empty() {
            return None;
        }
        let last = &trial.episodes[trial.episodes.len().saturating_sub(window)..];
        let opt_mean = |v: Vec<f64>| (!v.is_empty()).then(|| mean(&v));
        Some(TrialSummary {
            social_welfare: mean(&last.iter().map(|e| e.social_welfare).collect::<Vec<_>>()),
            length: mean(&last.iter().map(|e| e.length).collect::<Vec<_>>()),
            convergence_time: trial.convergence_time() as f64,
            jain: opt_mean(last.iter().filter_map(|e| e.jain).collect()),
            gini: opt_mean(last.iter().filter_map(|e| e.gini).collect()),
            cic: opt_mean(trial.cic.clone()),
        })
    }
}

/// Relative difference and t-test p-value of one metric against the
/// no-signal cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub relative_difference: Option<f64>,
    pub p_value: Option<f64>,
}

impl Comparison {
    fn between(with: &[f64], without: &[f64]) -> Self {
        if with.is_empty() || without.is_empty() {
            return Comparison::default();
        }
        Comparison {
            relative_difference: relative_difference(mean(with), mean(without)).ok(),
            p_value: student_t_test(with, without).ok().map(|t| t.p),
        }
    }
}

/// Cell-level aggregates; one row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub n_agents: usize,
    pub m_s: f64,
    pub signal: usize,
    pub s_eq: f64,
    pub trials: usize,
    pub failed: usize,
    pub social_welfare: Option<f64>,
    pub length: Option<f64>,
    pub convergence_time: Option<f64>,
    pub jain: Option<f64>,
    pub gini: Option<f64>,
    pub cic: Option<f64>,
    /// Mean number of agents per access bin across trials.
    pub idle: Option<f64>,
    pub moderate: Option<f64>,
    pub active: Option<f64>,
    pub social_welfare_vs_no_signal: Comparison,
    pub length_vs_no_signal: Comparison,
    pub convergence_time_vs_no_signal: Comparison,
    pub jain_vs_no_signal: Comparison,
    pub gini_vs_no_signal: Comparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub spec: CellSpec,
    pub s_eq: f64,
    pub limits: TheoryLimits,
    pub trials: Vec<TrialResult>,
    pub summary: CellSummary,
}

impl CellResult {
    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn trial_summaries(&self, window: usize) -> Vec<TrialSummary> {
        self.trials.iter().filter_map(|t| TrialSummary::of(t, window)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub wall_clock_seconds: f64,
}

impl ExperimentResults {
    pub fn total_steps(&self) -> u64 {
        self.cells.iter().flat_map(|c| &c.trials).map(|t| t.total_steps).sum()
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            format_version: FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| ManifestCell {
                    id: c.id(),
                    spec: c.spec,
                    s_eq: c.s_eq,
                    limits: c.limits,
                    trial_seeds: c.trials.iter().map(|t| t.seed).collect(),
                    failures: c.trials.iter().filter_map(|t| t.failure.clone()).collect(),
                })
                .collect(),
            wall_clock_seconds: self.wall_clock_seconds,
            total_steps: self.total_steps(),
        }
    }
}

/// Provenance of a run: enough to repeat it exactly with the same build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<ManifestCell>,
    pub wall_clock_seconds: f64,
    pub total_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub id: String,
    pub spec: CellSpec,
    pub s_eq: f64,
    pub limits: TheoryLimits,
    pub trial_seeds: Vec<u64>,
    pub failures: Vec<String>,
}

/// Trial seeds of every cell, in grid order.
pub fn planned_seeds(config: &ExperimentConfig) -> Vec<(CellSpec, Vec<u64>)> {
    config
        .cells()
        .into_iter()
        .map(|c| {
            let seeds = (0..config.trials).map(|t| trial_seed(config.seed, &c.seed_key(), t)).collect();
            (c, seeds)
        })
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    run_experiment_with(config, &PpoFactory::from_config(config))
}

/// Runs every cell and trial in parallel. Parameter errors abort the whole
/// run before any training; numerical failures are recorded per trial.
pub fn run_experiment_with(config: &ExperimentConfig, factory: &dyn AgentFactory) -> Result<ExperimentResults> {
    config.validate()?;
    let start = Instant::now();
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let trials: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial_with(config, &cells[c], t, factory))
        .collect::<Result<_>>()?;

    let mut grouped: Vec<Vec<TrialResult>> = vec![Vec::new(); cells.len()];
    for (t, &(c, _)) in trials.into_iter().zip(&jobs) {
        grouped[c].push(t);
    }
    let mut results = Vec::with_capacity(cells.len());
    for (spec, trials) in cells.iter().zip(grouped) {
        let s_eq = config.s_eq(spec)?;
        let limits = TheoryLimits::compute(spec.n_agents, config.growth_rate, config.e_max)?;
        let summary = summarize_cell(config, spec, s_eq, &trials, None);
        results.push(CellResult {
            spec: *spec,
            s_eq,
            limits,
            trials,
            summary,
        });
    }
    // compare each cell with the no-signal cell of the same population and scarcity
    for i in 0..results.len() {
        let spec = results[i].spec;
        let base = results
            .iter()
            .position(|c| c.spec.signal == 1 && c.spec.n_agents == spec.n_agents && c.spec.m_s == spec.m_s);
        if let Some(b) = base {
            let base_trials = results[b].trials.clone();
            let r = &mut results[i];
            r.summary = summarize_cell(config, &spec, r.s_eq, &r.trials, Some(&base_trials));
        }
    }
    Ok(ExperimentResults {
        config: config.clone(),
        cells: results,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn summarize_cell(
    config: &ExperimentConfig,
    spec: &CellSpec,
    s_eq: f64,
    trials: &[TrialResult],
    baseline: Option<&[TrialResult]>,
) -> CellSummary {
    let w = config.report_window;
    let ok: Vec<TrialSummary> = trials.iter().filter_map(|t| TrialSummary::of(t, w)).collect();
    let col = |f: &dyn Fn(&TrialSummary) -> Option<f64>, s: &[TrialSummary]| -> Vec<f64> { s.iter().filter_map(f).collect() };
    let avg = |v: Vec<f64>| (!v.is_empty()).then(|| mean(&v));

    let bins: Vec<_> = trials
        .iter()
        .filter(|t| t.failure.is_none() && !t.mean_efforts.is_empty())
        .map(|t| access_bins(&t.mean_efforts, config.e_max))
        .collect();
    let bin_avg = |f: &dyn Fn(&crate::metrics::AccessBins) -> usize| avg(bins.iter().map(|b| f(b) as f64).collect());

    let base: Vec<TrialSummary> = baseline
        .map(|b| b.iter().filter_map(|t| TrialSummary::of(t, w)).collect())
        .unwrap_or_default();
    let compare = |f: &dyn Fn(&TrialSummary) -> Option<f64>| {
        if baseline.is_none() {
            Comparison::default()
        } else {
            Comparison::between(&col(f, &ok), &col(f, &base))
        }
    };

    CellSummary {
        cell: spec.id(),
        n_agents: spec.n_agents,
        m_s: spec.m_s,
        signal: spec.signal,
        s_eq,
        trials: trials.len(),
        failed: trials.iter().filter(|t| t.failure.is_some()).count(),
        social_welfare: avg(col(&|s| Some(s.social_welfare), &ok)),
        length: avg(col(&|s| Some(s.length), &ok)),
        convergence_time: avg(col(&|s| Some(s.convergence_time), &ok)),
        jain: avg(col(&|s| s.jain, &ok)),
        gini: avg(col(&|s| s.gini, &ok)),
        cic: avg(col(&|s| s.cic, &ok)),
        idle: bin_avg(&|b| b.idle),
        moderate: bin_avg(&|b| b.moderate),
        active: bin_avg(&|b| b.active),
        social_welfare_vs_no_signal: compare(&|s| Some(s.social_welfare)),
        length_vs_no_signal: compare(&|s| Some(s.length)),
        convergence_time_vs_no_signal: compare(&|s| Some(s.convergence_time)),
        jain_vs_no_signal: compare(&|s| s.jain),
        gini_vs_no_signal: compare(&|s| s.gini),
    }
}
