#![no_main]

use fuzzssd::report::{parse_events, render_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rows) = parse_events(text) {
        let rendered = render_events(&rows);
        assert_eq!(parse_events(&rendered).map(|r| r.len()).ok(), Some(rows.len()));
    }
});
