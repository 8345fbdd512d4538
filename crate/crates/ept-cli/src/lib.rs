//! Experiment harness for the prompt-tuning pipeline: budget planning,
//! backbone pretraining, single runs, the component-ablation matrix,
//! prompt-length and subspace-count sweeps, learning-rate grid search,
//! gradient checking, and few-shot prompt transfer.
//!
//! Configuration lives in one flat file of dotted keys; every value can
//! be overridden on the command line by a flag of the same name
//! (`--train.steps 500`). Each invocation writes into its own output
//! directory: deterministic CSV/JSONL result files stamped with the
//! config hash, wall-clock measurements in separate timing files, and
//! binary checkpoints for exact resumption.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::Config;
pub use error::{exit_code, CliError, CliResult};
pub use runner::{CellSpec, ExperimentSpec};
