//! Command-line tool around `prior-forge-core`: density and spec files,
//! CSV and JSON output, and the subcommand runners.
//!
//! Exit status 0 means the command produced its result, including findings
//! such as an improper posterior. Status 1 is invalid input, status 2 a
//! numerical failure.

pub mod commands;
pub mod density_io;
pub mod error;
pub mod output;
pub mod spec;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::Cli;
pub use error::{CliError, CliResult};

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match commands::dispatch(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
