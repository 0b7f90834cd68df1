#![no_main]

use fuzzssd::report::{parse_summary, render_summary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rows) = parse_summary(text) {
        let rendered = render_summary(&rows);
        assert_eq!(parse_summary(&rendered).map(|r| r.len()).ok(), Some(rows.len()));
    }
});
