#![no_main]

use libfuzzer_sys::fuzz_target;
use sweepkit::aggregate::{parse_summary_csv, render_summary_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(bands) = parse_summary_csv(text) {
        let rendered = render_summary_csv(&bands);
        assert_eq!(parse_summary_csv(&rendered).unwrap(), bands);
    }
});
