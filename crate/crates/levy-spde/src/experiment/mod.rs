//! Experiment harness: configuration, rate fitting, runners and the CLI.

pub mod cli;
pub mod config;
pub mod rate;
pub mod runner;

pub use cli::run_cli;
pub use config::{default_config, Experiment, ExperimentConfig, Functional, Mode};
pub use rate::{fit_rate, log_corrected, RateFit};
pub use runner::{
    coupling_variance_factor, lab_suite, simulate, smoothing_check, strong_error_analytic,
    strong_error_mc, weak_error_analytic, weak_error_mc, LabCheck, SmoothingReport, StrongReport,
    WeakReport, DEFAULT_SMOOTHING_MESHES, DEFAULT_T_GRID, ERROR_FLOOR,
};
