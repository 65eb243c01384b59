use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let status = d2dcache_cli::run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(u8::try_from(status).unwrap_or(1))
}
