#![no_main]

use fuzzssd::report::{parse_crashes, render_crashes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rows) = parse_crashes(text) {
        let rendered = render_crashes(&rows);
        assert_eq!(parse_crashes(&rendered).map(|r| r.len()).ok(), Some(rows.len()));
    }
});
