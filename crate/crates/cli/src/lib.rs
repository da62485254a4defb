//! Command-line front end: argument parsing, command execution and reports.

pub mod args;
pub mod commands;
pub mod report;

pub use args::{Cli, Command, Format};
pub use commands::{cmd_eta, cmd_run, cmd_simulate, emit, render, CliError};
pub use report::{Report, ResultPayload};

/// Runs one command and writes its report; returns the process exit status.
///
/// 0 when the result is certified, 3 when a report was written but the data
/// ran out first, otherwise the error's code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    let (report, output) = match &cli.command {
        Command::Eta(a) => (cmd_eta(a)?, &a.output),
        Command::Simulate(a) => (cmd_simulate(a)?, &a.output),
        Command::Run(a) => (cmd_run(a)?, &a.output),
    };
    emit(&report, output)?;
    Ok(if report.certified { 0 } else { 3 })
}
