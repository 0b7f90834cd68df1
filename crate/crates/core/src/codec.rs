//! Byte genomes, their decoding into command sequences, and mutation.
//!
//! A genome is read as consecutive 8-byte records:
//!
//! | byte | meaning                                           |
//! |------|---------------------------------------------------|
//! | 0    | opcode index into the enabled opcode list (mod)   |
//! | 1..5 | little-endian `u32`, `mod logical_pages` → lba    |
//! | 5..7 | little-endian `u16`, `mod max_nlb` plus one → nlb |
//! | 7    | payload seed                                      |
//!
//! `nlb` is clamped so that a command never runs past the last logical
//! page, which makes decoding total over arbitrary bytes.

use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ssd::{DeviceConfig, IoCommand, Opcode, OpcodeSet};

pub const RECORD_LEN: usize = 8;
pub const DEFAULT_SEQ_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Genome(Vec<u8>);

impl Genome {
    pub fn new(bytes: Vec<u8>) -> Self {
        Genome(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    /// Number of complete records.
    pub fn records(&self) -> usize {
        self.0.len() / RECORD_LEN
    }
}

impl From<Vec<u8>> for Genome {
    fn from(bytes: Vec<u8>) -> Self {
        Genome(bytes)
    }
}

impl Deref for Genome {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// An ordered, bounded list of commands executed as one fuzzing input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TestSequence {
    pub commands: Vec<IoCommand>,
}

impl TestSequence {
    pub fn new(commands: Vec<IoCommand>) -> Self {
        Self { commands }
    }
}

impl Deref for TestSequence {
    type Target = [IoCommand];

    fn deref(&self) -> &[IoCommand] {
        &self.commands
    }
}

/// Decoder parameters bundled for repeated use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceCodec {
    enabled: Vec<Opcode>,
    logical_pages: u32,
    max_nlb: u32,
    seq_limit: usize,
}

impl SequenceCodec {
    /// Returns `None` when no opcode is enabled.
    pub fn new(enabled: OpcodeSet, config: &DeviceConfig, seq_limit: usize) -> Option<Self> {
        if enabled.is_empty() {
            return None;
        }
        Some(Self {
            enabled: enabled.to_vec(),
            logical_pages: config.logical_pages.max(1),
            max_nlb: config.max_nlb.max(1),
            seq_limit,
        })
    }

    pub fn seq_limit(&self) -> usize {
        self.seq_limit
    }

    pub fn enabled(&self) -> &[Opcode] {
        &self.enabled
    }

    /// Longest genome worth keeping: every full record plus a partial tail.
    pub fn max_genome_len(&self) -> usize {
        self.seq_limit * RECORD_LEN + RECORD_LEN - 1
    }

    pub fn decode_record(&self, rec: &[u8]) -> IoCommand {
        let opcode = self.enabled[rec[0] as usize % self.enabled.len()];
        if opcode == Opcode::Flush {
            return IoCommand::flush();
        }
        let raw_lba = u32::from_le_bytes([rec[1], rec[2], rec[3], rec[4]]);
        let lba = raw_lba % self.logical_pages;
        let raw_nlb = u32::from(u16::from_le_bytes([rec[5], rec[6]]));
        let nlb = (raw_nlb % self.max_nlb + 1).min(self.logical_pages - lba);
        IoCommand {
            opcode,
            lba,
            nlb,
            payload_seed: rec[7],
        }
    }

    pub fn decode(&self, genome: &[u8]) -> TestSequence {
        TestSequence::new(
            genome
                .chunks_exact(RECORD_LEN)
                .take(self.seq_limit)
                .map(|rec| self.decode_record(rec))
                .collect(),
        )
    }

    /// Inverse of [`decode`](Self::decode) for sequences of in-range
    /// commands. Returns `None` if a command uses a disabled opcode.
    pub fn encode(&self, seq: &[IoCommand]) -> Option<Genome> {
        let mut bytes = Vec::with_capacity(seq.len() * RECORD_LEN);
        for cmd in seq {
            let idx = self.enabled.iter().position(|&op| op == cmd.opcode)?;
            bytes.push(idx as u8);
            if cmd.opcode == Opcode::Flush {
                bytes.extend_from_slice(&[0; RECORD_LEN - 1]);
                continue;
            }
            bytes.extend_from_slice(&cmd.lba.to_le_bytes());
            bytes.extend_from_slice(&(cmd.nlb.saturating_sub(1) as u16).to_le_bytes());
            bytes.push(cmd.payload_seed);
        }
        Some(Genome(bytes))
    }

    /// A uniformly random genome of 1..=seq_limit records.
    pub fn random_genome<R: Rng + ?Sized>(&self, rng: &mut R) -> Genome {
        let records = rng.gen_range(1..=self.seq_limit.max(1));
        let mut bytes = vec![0u8; records * RECORD_LEN];
        rng.fill(bytes.as_mut_slice());
        Genome(bytes)
    }
}

/// Decodes `genome` into at most `seq_limit` commands.
///
/// # Panics
///
/// If `enabled` is empty.
pub fn decode(
    genome: &[u8],
    enabled: OpcodeSet,
    config: &DeviceConfig,
    seq_limit: usize,
) -> TestSequence {
    SequenceCodec::new(enabled, config, seq_limit)
        .expect("at least one opcode must be enabled")
        .decode(genome)
}

/// The genome whose decoding is a single one-page Write at lba 0.
pub fn initial_seed() -> Genome {
    Genome(vec![0; RECORD_LEN])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationOp {
    BitFlip,
    ByteSet,
    DuplicateRecord,
    DeleteRecord,
    SwapRecords,
    AppendRecords,
    Splice,
}

/// Applies one randomly chosen applicable operator.
///
/// The result never exceeds `seq_limit * 8 + 7` bytes.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    donor: Option<&Genome>,
    rng: &mut R,
    seq_limit: usize,
) -> Genome {
    let mut bytes = genome.0.clone();
    let records = bytes.len() / RECORD_LEN;
    let donor = donor.filter(|d| d.records() > 0);

    let mut ops = Vec::with_capacity(7);
    if !bytes.is_empty() {
        ops.extend([MutationOp::BitFlip, MutationOp::ByteSet]);
    }
    if records > 0 {
        ops.extend([MutationOp::DuplicateRecord, MutationOp::DeleteRecord]);
    }
    if records > 1 {
        ops.push(MutationOp::SwapRecords);
    }
    ops.push(MutationOp::AppendRecords);
    if donor.is_some() {
        ops.push(MutationOp::Splice);
    }

    let op = *ops.choose(rng).expect("append is always applicable");
    match op {
        MutationOp::BitFlip => {
            let pos = rng.gen_range(0..bytes.len());
            bytes[pos] ^= 1 << rng.gen_range(0..8);
        }
        MutationOp::ByteSet => {
            let pos = rng.gen_range(0..bytes.len());
            bytes[pos] = rng.gen();
        }
        MutationOp::DuplicateRecord => {
            let i = rng.gen_range(0..records) * RECORD_LEN;
            let rec: Vec<u8> = bytes[i..i + RECORD_LEN].to_vec();
            bytes.splice(i + RECORD_LEN..i + RECORD_LEN, rec);
        }
        MutationOp::DeleteRecord => {
            let i = rng.gen_range(0..records) * RECORD_LEN;
            bytes.drain(i..i + RECORD_LEN);
        }
        MutationOp::SwapRecords => {
            let a = rng.gen_range(0..records);
            let mut b = rng.gen_range(0..records - 1);
            if b >= a {
                b += 1;
            }
            for k in 0..RECORD_LEN {
                bytes.swap(a * RECORD_LEN + k, b * RECORD_LEN + k);
            }
        }
        MutationOp::AppendRecords => {
            bytes.truncate(records * RECORD_LEN);
            let count = rng.gen_range(1..=4);
            let start = bytes.len();
            bytes.resize(start + count * RECORD_LEN, 0);
            rng.fill(&mut bytes[start..]);
        }
        MutationOp::Splice => {
            let donor = donor.expect("checked above");
            let cut = rng.gen_range(0..=records) * RECORD_LEN;
            let from = rng.gen_range(0..donor.records()) * RECORD_LEN;
            bytes.truncate(cut);
            bytes.extend_from_slice(&donor.0[from..]);
        }
    }
    bytes.truncate(seq_limit * RECORD_LEN + RECORD_LEN - 1);
    Genome(bytes)
}

/// Swaps two commands, or drops one that does not touch the FTL.
/// Never lengthens the sequence.
pub fn reorder_suppress<R: Rng + ?Sized>(seq: &TestSequence, rng: &mut R) -> TestSequence {
    TestSequence::new(reorder_suppress_by(
        &seq.commands,
        |c| !c.opcode.touches_ftl(),
        rng,
    ))
}

/// [`reorder_suppress`] over arbitrary items; `idle` marks the droppable ones.
pub fn reorder_suppress_by<T: Clone, R: Rng + ?Sized>(
    items: &[T],
    idle: impl Fn(&T) -> bool,
    rng: &mut R,
) -> Vec<T> {
    let mut items = items.to_vec();
    if items.is_empty() {
        return items;
    }
    let droppable: Vec<usize> = (0..items.len()).filter(|&i| idle(&items[i])).collect();
    if !droppable.is_empty() && rng.gen_bool(0.5) {
        let victim = *droppable.choose(rng).expect("nonempty");
        items.remove(victim);
    } else if items.len() > 1 {
        let a = rng.gen_range(0..items.len());
        let mut b = rng.gen_range(0..items.len() - 1);
        if b >= a {
            b += 1;
        }
        items.swap(a, b);
    }
    items
}
