//! CLI wiring: argument parsing, command dispatch, and the exit-code
//! contract (0 success, 1 usage, 2 data/format, 3 numeric failure).

pub mod args;
pub mod commands;
pub mod config_file;
pub mod dataset;
pub mod settings;
pub mod task;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};
use nice_core::Error;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Format { .. }
        | Error::UnsupportedVersion { .. }
        | Error::Domain(_)
        | Error::Dimension(_)
        | Error::Io(_) => 2,
        Error::NumericOverflow(_) | Error::Numeric(_) | Error::Singularity(_) => 3,
    }
}

/// Run the CLI on the given argv (including the program name). Returns the
/// process exit code; diagnostics go to stderr, one line per failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and succeed; real parse
            // errors are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::cmd_train(a),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Sample(a) => commands::cmd_sample(a),
        Command::Inpaint(a) => commands::cmd_inpaint(a),
        Command::Spectrum(a) => commands::cmd_spectrum(a),
        Command::Manifold(a) => commands::cmd_manifold(a),
        Command::Whiten(a) => commands::cmd_whiten(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
