#![no_main]

use fuzzssd::codec::SequenceCodec;
use fuzzssd::ssd::{default_fault_set, Device, DeviceConfig, OpcodeSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut config = DeviceConfig::desk_scale();
    config.num_lines = 8;
    config.logical_pages = 192;
    config.gc_victim_threshold = 3;
    config.wl_erase_gap_threshold = 2;
    let codec = SequenceCodec::new(OpcodeSet::all(), &config, 1000).unwrap();
    let faults = default_fault_set();
    let mut device = Device::new(config).unwrap();
    for cmd in codec.decode(data).iter() {
        device.apply(cmd, &faults);
        if let Err(violation) = device.check_invariants() {
            panic!("{violation:?} after {cmd}");
        }
    }
});
