#![no_main]

use fuzzssd::engine::{parse_ontology, render_ontology};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(pool) = parse_ontology(text) {
        let rendered = render_ontology(&pool);
        let again = parse_ontology(&rendered).expect("rendered pool parses");
        assert_eq!(render_ontology(&again), rendered);
    }
});
