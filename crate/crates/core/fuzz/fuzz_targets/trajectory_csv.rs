#![no_main]

use libfuzzer_sys::fuzz_target;
use sweepkit::refmodel::parse_trajectory_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = parse_trajectory_csv(text, 0) {
            let again = parse_trajectory_csv(&t.to_csv(), 0).expect("rendered trajectory parses");
            assert_eq!(again, t);
        }
    }
});
