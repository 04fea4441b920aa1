#![no_main]

use finsler_core::formats::{parse_field_csv, series_to_field_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = parse_field_csv(text) {
        let written = series_to_field_csv(&series);
        let again = parse_field_csv(&written).expect("written field parses");
        assert_eq!(series_to_field_csv(&again), written);
    }
});
