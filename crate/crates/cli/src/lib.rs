//! Library surface backing the `sisr` binary, kept separate so the
//! subcommands are testable in-process.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_evaluate, cmd_filter, cmd_impute, cmd_simulate, evaluate_reports, load_config,
    summary_csv, CmdError, EvaluationRow,
};
pub use config::{ChannelConfig, FilterSection, ModelConfig, ResamplingName, RunConfig};
