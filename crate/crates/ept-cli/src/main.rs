use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ept_cli::commands;
use ept_cli::config::Config;
use ept_cli::error::{config_err, exit_code, CliResult};
use ept_cli::output::resolve_out_dir;
use ept_cli::runner::ExperimentSpec;

#[derive(Parser)]
#[command(
    name = "ept",
    about = "Prompt-tuning experiment harness",
    after_help = "Any config key can be overridden with a flag of the same dotted name,\n\
                  e.g. `ept train --train.steps 500 --task.kind majority-half`."
)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; default is a fresh timestamped directory under runs/.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Allow writing into an existing output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    /// Concurrent experiment cells (sweeps, grids, ablations).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-budget rank for a prompt decomposition.
    Budget,
    /// Pretrain the frozen backbone with masked-token prediction.
    Pretrain,
    /// One training run on one task.
    Train,
    /// Collapse a trained checkpoint into the deployment prompt.
    Bake,
    /// Finite-difference verification of the pipeline gradients.
    Gradcheck,
    /// Component ablation matrix across tasks and seeds.
    Ablate,
    /// Fixed-budget sweep over the retained prompt length.
    SweepLength,
    /// Sweep over the number of projection subspaces, fusion off.
    SweepSpaces,
    /// Learning-rate grid search.
    Grid,
    /// Few-shot prompt transfer from a source task checkpoint.
    Transfer,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Budget => "budget",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Bake => "bake",
            Command::Gradcheck => "gradcheck",
            Command::Ablate => "ablate",
            Command::SweepLength => "sweep-length",
            Command::SweepSpaces => "sweep-spaces",
            Command::Grid => "grid",
            Command::Transfer => "transfer",
        }
    }
}

/// Pull `--section.key value` / `--section.key=value` overrides out of the
/// raw argument list before clap sees it. A flag is an override when its
/// name has a dot or is otherwise a known config key (`--seeds`);
/// everything else belongs to clap.
fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let is_override = arg.starts_with("--")
            && arg[2..]
                .split('=')
                .next()
                .is_some_and(|name| name.contains('.') || ept_cli::config::is_known_key(name));
        if !is_override {
            rest.push(arg);
            continue;
        }
        let body = &arg[2..];
        match body.split_once('=') {
            Some((key, value)) => overrides.push((key.to_string(), value.to_string())),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| config_err(format!("override --{body} is missing a value")))?;
                overrides.push((body.to_string(), value));
            }
        }
    }
    Ok((rest, overrides))
}

fn dispatch(cli: Cli, config: Config) -> CliResult<()> {
    let name = cli.command.name();
    // The calculator subcommands print to stdout and only write files
    // when an output directory is asked for explicitly.
    if let Command::Budget = cli.command {
        let out = match &cli.out {
            Some(dir) => Some(resolve_out_dir(Some(dir), cli.overwrite, name)?),
            None => None,
        };
        return commands::budget::run(&config, out.as_deref());
    }

    if cli.jobs == 0 {
        return Err(config_err("--jobs must be at least 1"));
    }
    let out_dir = resolve_out_dir(cli.out.as_deref(), cli.overwrite, name)?;
    let seeds = config.seeds()?;
    let mut spec = ExperimentSpec {
        subcommand: name.to_string(),
        config,
        out_dir,
        seeds,
        axis: None,
        jobs: cli.jobs,
    };
    match cli.command {
        Command::Budget => unreachable!("handled above"),
        Command::Pretrain => commands::pretrain::run(&spec),
        Command::Train => commands::train::run(&spec),
        Command::Bake => commands::bake::run(&spec),
        Command::Gradcheck => commands::gradcheck::run(&spec),
        Command::Ablate => commands::ablate::run(&spec),
        Command::SweepLength => commands::sweep_length::run(&mut spec),
        Command::SweepSpaces => commands::sweep_spaces::run(&mut spec),
        Command::Grid => commands::grid::run(&spec),
        Command::Transfer => commands::transfer::run(&spec),
    }
}

fn main() -> ExitCode {
    let result = (|| {
        let (clap_args, overrides) = split_overrides(std::env::args().collect())?;
        let cli = Cli::parse_from(clap_args);
        let config = Config::load(cli.config.as_deref(), &overrides)?;
        dispatch(cli, config)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
