#![no_main]

use d2dcache_cli::grid::{format_grid, parse_grid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_grid(text) {
        assert!(!values.is_empty() && values.iter().all(|v| v.is_finite() && *v > 0.0));
        assert_eq!(parse_grid(&format_grid(&values)).expect("formatted grid parses"), values);
    }
});
