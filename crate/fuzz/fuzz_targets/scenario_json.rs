#![no_main]

use finsler_core::formats::ScenarioOverride;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = ScenarioOverride::from_json(text) {
        let again = ScenarioOverride::from_json(&spec.to_json()).expect("written override parses");
        assert_eq!(again.to_json(), spec.to_json());
        let _ = spec.build();
    }
});
