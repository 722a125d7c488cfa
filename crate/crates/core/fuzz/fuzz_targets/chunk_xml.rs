#![no_main]

use libfuzzer_sys::fuzz_target;
use sweepkit::plan::{parse_chunk_str, render_chunk_xml};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything accepted must re-render to a fixed point.
    if let Ok(chunk) = parse_chunk_str(text) {
        let once = render_chunk_xml(&chunk);
        let again = parse_chunk_str(&once).expect("rendered chunk parses");
        assert_eq!(render_chunk_xml(&again), once);
    }
});
