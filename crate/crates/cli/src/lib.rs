//! Configuration, scenario pipelines and file outputs for the `nvltm`
//! command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_io;
mod error;
pub mod output;
pub mod report;
pub mod scenarios;
pub mod selftest;

pub use config::{parse_config, ConfigError, ConfigErrors, ExperimentConfig, Scenario, ScenarioKind};
pub use error::{CliError, CliResult};
pub use report::RunReport;
pub use scenarios::{run_scenario, run_scenario_with_workers};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NVLTM_OUT_DIR";
/// Output directory used when neither `--out` nor the environment sets one.
pub const DEFAULT_OUT_DIR: &str = "nvltm-out";
