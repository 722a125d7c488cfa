#![no_main]

use libfuzzer_sys::fuzz_target;
use sweepkit::aggregate::{parse_grid_csv, render_grid_csv, GridIndicator};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(grid) = parse_grid_csv(text, GridIndicator::Deaths) {
        let rendered = render_grid_csv(&grid).expect("grid renders");
        assert_eq!(
            parse_grid_csv(&rendered, GridIndicator::Deaths).unwrap(),
            grid
        );
    }
});
