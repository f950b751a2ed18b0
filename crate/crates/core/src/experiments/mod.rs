//! Configuration, rate sweeps and verification suites behind the CLI.

pub mod config;
pub mod fit;
pub mod lookback;
pub mod marginal;
pub mod ot_check;
pub mod pathwise;
pub mod report;
pub mod runner;
pub mod strong;
pub mod verify;

pub use config::{ExperimentConfig, MRule, Payoff};
pub use fit::{RateFit, rate_fit};
pub use lookback::{gbm_expected_exp_max, lookback_closed_form, run_lookback_bias, running_max_sf};
pub use marginal::run_marginal_rate;
pub use ot_check::{OT_TOLERANCE, ot_instance, run_ot_check};
pub use pathwise::{PathwiseRun, run_pathwise_rate};
pub use report::{Check, Provenance, RateReport, RateRow, SuiteReport, fmt_f64};
pub use runner::{MeanAcc, with_workers};
pub use strong::run_strong_rate;
pub use verify::run_verify;
