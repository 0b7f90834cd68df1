#![no_main]

use fuzzssd::campaign::{CampaignConfig, Strategy};
use fuzzssd::report::{apply_config, parse_config, render_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(entries) = parse_config(text) else {
        return;
    };
    let mut config = CampaignConfig::new(Strategy::StateAware, 0);
    if apply_config(&entries, &mut config).is_err() {
        return;
    }
    let rendered = render_config(&config);
    let mut again = CampaignConfig::new(Strategy::Random, 1);
    apply_config(&parse_config(&rendered).unwrap(), &mut again).unwrap();
    assert_eq!(render_config(&again), rendered);
    let _ = config.validate();
});
