#![no_main]

use fuzzssd::report::{parse_admissions, render_admissions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(rows) = parse_admissions(text) {
        let rendered = render_admissions(&rows);
        assert_eq!(parse_admissions(&rendered).map(|r| r.len()).ok(), Some(rows.len()));
    }
});
