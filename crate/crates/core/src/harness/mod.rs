//! Experiment configuration, Monte-Carlo orchestration and CSV output.
//!
//! Each trial owns generators derived from `(master seed, trial index)`, so the
//! rows are identical for any thread count.

mod config;
mod diff;
mod output;
mod runner;

use thiserror::Error;

use crate::ConfigError;

pub use config::{BandChoice, EstimatorKind, ExperimentConfig, Scenario, parse_gain_model};
pub use diff::{compare_paths, greedy_match, ParamErrors, DELAY_FLOOR};
pub use output::{metrics_csv, plot_csv, summarize, summary_csv, timing_csv, write_outputs, SummaryRow};
pub use runner::{
    build_database, describe_scenarios, max_rel_gap, mean_l_scsi, run_experiment, scene_params, trial_rng,
    ExperimentResult, MetricsRow, PointKey, TrialFailure, TrialTiming,
};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "SCSILAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration and I/O problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

/// `explicit`, else `SCSILAB_THREADS`, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(THREADS_ENV).ok()?.trim().parse().ok()).filter(|&t| t > 0)
}
