//! Experiment orchestration: configuration, seeded trials, aggregation and
//! persistence.

mod baseline;
mod config;
mod experiment;
mod persist;
mod rollout;

pub use baseline::{baseline_csv, baseline_sweep, BaselineRow, BaselineSweep};
pub use config::{CellSpec, ExperimentConfig, SignalSpec, CONFIG_KEYS};
pub use experiment::{
    planned_seeds, run_experiment, run_experiment_with, CellResult, CellSummary, Comparison, ExperimentResults,
    ManifestCell, RunManifest, TrialSummary, FORMAT_VERSION,
};
pub use persist::{
    cell_dir, episodes_csv, fmt_float, load_manifest, persist, profile_csv, read_summary_csv, replay, replay_with,
    summary_csv, EPISODE_COLUMNS, PROFILE_COLUMNS, SUMMARY_COLUMNS,
};
pub use rollout::{
    agent_rng, run_episode, run_trial, run_trial_with, trial_rng, trial_seed, AgentFactory, EpisodeOutcome,
    Learners, PpoFactory, TrialResult,
};
