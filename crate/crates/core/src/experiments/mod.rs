//! Experiment orchestration: config files, sweeps, the result store and
//! figure rendering.

pub mod config;
pub mod figures;
pub mod runner;

pub use config::{
    CompareConfig, DataConfig, EvalConfig, ExperimentConfig, RlConfig, SweepConfig,
};
pub use runner::{run_model_comparison, run_overlap_sweep, run_rl_evaluation, write_report, RunRecord};
