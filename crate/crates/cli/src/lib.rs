//! Command-line front end for the `tirtone` pipeline.
//!
//! Every invocation is resolved into a [`RunConfig`] and then executed.
//! Exit codes: 0 on success, 2 on invalid arguments or data, 3 on
//! filesystem errors.

mod args;
pub mod commands;
pub mod config;
pub mod error;
mod output;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use config::{Command, Operator, RunConfig};
pub use error::{CliError, EXIT_IO, EXIT_VALIDATION};

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Results go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let print_only = cli.print_config;
    let result = cli.resolve().and_then(|cfg| {
        if print_only {
            Ok(cfg.to_toml())
        } else {
            commands::execute(&cfg)
        }
    });
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
