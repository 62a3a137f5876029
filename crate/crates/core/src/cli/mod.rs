//! Scenario runner behind the `wentzell` binary.

mod config;
mod run;

pub use config::{apply_override, parse_config, preset, read_config, Checks, Mode, RunConfig, PRESETS};
pub use run::{
    exit_code, failure_json, fmt_f64, problem, run, Check, Outcome, EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGED,
    EXIT_OK,
};
