#![no_main]

use fuzzssd::codec::SequenceCodec;
use fuzzssd::ssd::{DeviceConfig, Opcode, OpcodeSet};
use libfuzzer_sys::fuzz_target;

// First byte picks the enabled opcodes; the rest is the genome.
fuzz_target!(|data: &[u8]| {
    let Some((&mask, genome)) = data.split_first() else {
        return;
    };
    let enabled: OpcodeSet = Opcode::ALL
        .into_iter()
        .filter(|op| mask & (1 << op.index()) != 0)
        .collect();
    let config = DeviceConfig::desk_scale();
    let Some(codec) = SequenceCodec::new(enabled, &config, 100) else {
        return;
    };
    let seq = codec.decode(genome);
    assert!(seq.len() <= 100);
    for cmd in seq.iter() {
        assert!(enabled.contains(cmd.opcode));
        if cmd.opcode != Opcode::Flush {
            assert!(cmd.nlb >= 1 && cmd.lba + cmd.nlb <= config.logical_pages);
        }
    }
    let encoded = codec.encode(&seq).expect("decoded opcodes are enabled");
    assert_eq!(codec.decode(&encoded), seq);
});
