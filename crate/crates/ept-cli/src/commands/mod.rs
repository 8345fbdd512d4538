//! One module per subcommand. Each `run` takes the resolved
//! [`ExperimentSpec`](crate::runner::ExperimentSpec) (or the raw config for
//! the calculator-style subcommands) and writes its artifacts into the
//! spec's output directory.

pub mod ablate;
pub mod bake;
pub mod budget;
pub mod gradcheck;
pub mod grid;
pub mod pretrain;
pub mod sweep_length;
pub mod sweep_spaces;
pub mod train;
pub mod transfer;

use crate::config::Config;
use crate::error::CliResult;
use crate::output::write_text;
use std::path::Path;

/// Drop a `config.txt` with the canonical key listing next to the results
/// so any run can be reproduced exactly from its output directory.
pub fn write_config_echo(dir: &Path, cfg: &Config) -> CliResult<()> {
    write_text(&dir.join("config.txt"), &cfg.canonical_text())
}
