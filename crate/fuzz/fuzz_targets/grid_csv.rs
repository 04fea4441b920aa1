#![no_main]

use finsler_core::formats::{parse_grid_csv, rows_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_grid_csv(text) {
        let written = rows_to_csv(&rows);
        let again = parse_grid_csv(&written).expect("written grid parses");
        assert_eq!(rows_to_csv(&again), written);
    }
});
