#![no_main]

use finsler_cli::config::parse_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_list("x0", text) {
        assert_eq!(values.len(), text.matches(',').count() + 1);
    }
});
