//! Command-line front end: every command writes its results as files plus a
//! [`manifest::RunManifest`] describing how they were produced.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod plot;

use clap::Parser;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Runs a parsed command; `argv` are the arguments after the program name.
pub fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    if cli.sequential {
        a3d::exec::set_exec_mode(a3d::exec::ExecMode::Sequential);
    }
    match &cli.command {
        Command::Cost(a) => commands::cost::run(a, argv),
        Command::Train(a) => commands::train::run(a, argv),
        Command::Calibrate(a) => commands::deploy::calibrate(a, argv),
        Command::Table(a) => commands::deploy::table(a, argv),
        Command::Eval(a) => commands::deploy::eval(a, argv),
        Command::Infer(a) => commands::deploy::infer(a, argv),
        Command::Cam(a) => commands::deploy::cam(a, argv),
        Command::Plot(a) => commands::plot::run(a, argv),
        Command::Synth(a) => commands::synth::run(a, argv),
        Command::Replay(a) => replay(&a.manifest),
    }
}

/// Re-runs the arguments recorded in a manifest with its seed.
fn replay(path: &std::path::Path) -> CliResult<()> {
    let m = manifest::RunManifest::load(path)?;
    let cli = Cli::try_parse_from(std::iter::once("a3d".to_string()).chain(m.argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    std::env::set_var(commands::SEED_ENV, m.seed.to_string());
    run(&cli, &m.argv)
}
