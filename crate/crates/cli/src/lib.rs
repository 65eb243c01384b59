//! Command-line front end: `costs`, `simulate`, `sweep` and `thresholds`,
//! writing CSV or JSON tables.
//!
//! Exit status: 0 on success, 2 for invalid parameters or usage, 3 for an
//! under-sampled simulation, 4 when no cell of a threshold surface has any
//! crossing, 1 for anything else (I/O).

pub mod args;
pub mod commands;
pub mod config;
pub mod grid;
pub mod output;

use std::ffi::OsString;
use std::io::Write;

pub use args::{parse_args, Cli, Command};
pub use commands::{CliError, EXIT_INVALID, EXIT_NO_CROSSING, EXIT_OTHER, EXIT_UNDER_SAMPLED};
pub use config::ExperimentConfig;

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_INVALID
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    match commands::execute(&cli.command, stdout, stderr) {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
