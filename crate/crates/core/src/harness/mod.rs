//! Experiment configuration, horizon sweeps, CSV output and the CLI.

pub mod cli;
pub mod config;
pub mod runner;

pub use cli::run_cli;
pub use config::{DualCap, ExperimentConfig, InitMode, ProblemKind};
pub use runner::{
    build_network, build_problem, horizon_seed, run_experiment, run_horizon, run_sweep,
    run_sweep_with_workers, write_outputs, HorizonOutcome, SweepResult,
};
