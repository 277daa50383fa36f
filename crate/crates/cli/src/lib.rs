//! `mcal`: run active-learning experiments, aggregate their logs and serve
//! the labelling API.

pub mod cli;
pub mod commands;
pub mod error;

pub use error::CliError;

pub fn execute(cli: cli::Cli) -> Result<(), CliError> {
    match cli.command {
        cli::Command::Run(args) => commands::run(args),
        cli::Command::Report(args) => commands::report(args),
        cli::Command::Serve(args) => commands::serve(args),
    }
}
