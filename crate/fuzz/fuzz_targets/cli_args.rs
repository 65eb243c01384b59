#![no_main]

use d2dcache_cli::parse_args;
use libfuzzer_sys::fuzz_target;

// Arguments are separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let args = std::iter::once("d2dcache").chain(text.split('\0'));
    if let Ok(cli) = parse_args(args) {
        let _ = cli.command.flags();
        let _ = cli.command.config_path();
    }
});
