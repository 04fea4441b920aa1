#![no_main]

use finsler_cli::config::{RawConfig, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(raw) = RawConfig::from_json(text) {
        let again = RawConfig::from_json(&raw.to_json()).expect("written config parses");
        assert_eq!(again.to_json(), raw.to_json());
        let _ = RunConfig::from_raw(raw);
    }
});
