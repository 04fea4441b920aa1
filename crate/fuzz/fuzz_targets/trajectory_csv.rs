#![no_main]

use finsler_core::formats::{parse_trajectory_csv, trajectory_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traj) = parse_trajectory_csv(text) {
        let written = trajectory_to_csv(&traj);
        let again = parse_trajectory_csv(&written).expect("written trajectory parses");
        assert_eq!(trajectory_to_csv(&again), written);
    }
});
