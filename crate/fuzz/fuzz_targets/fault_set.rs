#![no_main]

use fuzzssd::ssd::{parse_fault_set, render_fault_set};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(faults) = parse_fault_set(text) {
        let rendered = render_fault_set(&faults);
        assert_eq!(parse_fault_set(&rendered).as_ref(), Ok(&faults));
    }
});
