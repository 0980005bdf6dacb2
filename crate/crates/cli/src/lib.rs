//! Command-line front end and HTTP service for `idcep`.
//!
//! Every subcommand reads an optional TOML [`config::RunConfig`]; flags given
//! on the command line override the file.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use commands::Cli;
pub use error::{CliError, CliResult};

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Human-readable output goes to `out`.
pub fn run_with_output<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(d) = e.diagnostics() {
                eprintln!("  {d}");
            }
            e.exit_code()
        }
    }
}

/// [`run_with_output`] writing to standard output.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with_output(argv, &mut lock)
}
