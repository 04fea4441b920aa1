#![no_main]

use finsler_core::formats::TripleSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = TripleSpec::from_json(text) {
        let again = TripleSpec::from_json(&spec.to_json()).expect("written triple parses");
        assert_eq!(again.to_json(), spec.to_json());
        if spec.n <= 16 && spec.basis.len() <= 32 {
            let _ = spec.build();
        }
    }
});
