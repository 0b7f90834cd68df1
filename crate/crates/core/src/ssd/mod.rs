//! Deterministic, instrumented SSD firmware model.
//!
//! The device is a page-mapped FTL with a host write buffer, threshold
//! triggered garbage collection, static wear-leveling and an uncorrectable
//! sector list. Every routine reports the instrumented [`Block`]s it runs
//! through so that a fuzzer can compute block coverage.

mod block;
mod device;
mod fault;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use block::{instrumented_block_universe, Block, BlockSet};
pub use device::{reset_device, CommandResult, CommandStatus, Device, InvariantViolation};
pub use fault::{
    default_fault_set, fault_set_preset, parse_fault_set, render_fault_set, CmpOp, Condition,
    FaultEvent, FaultField, FaultKind, FaultParseError, FaultSpec, DESK_SCALE_FAULTS,
    PAPER_SCALE_FAULTS,
};

/// Number of equal logical-address partitions tracked for I/O accumulation.
pub const SEGMENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("logical_pages must be at least 1")]
    NoLogicalPages,
    #[error(
        "logical_pages ({logical}) must not exceed 90% of physical pages ({physical}); \
         over-provisioning is required for garbage collection"
    )]
    InsufficientOverProvisioning { logical: u64, physical: u64 },
    #[error("gc_victim_threshold must be at least 1")]
    ZeroGcThreshold,
    #[error("gc_victim_threshold ({threshold}) must be below num_lines ({lines})")]
    GcThresholdTooLarge { threshold: u32, lines: u32 },
    #[error("{0} must be at least 1")]
    ZeroGeometry(&'static str),
    #[error("unknown device preset `{0}` (expected desk-scale or paper-scale)")]
    UnknownPreset(String),
}

/// Geometry and policy knobs of the simulated device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceConfig {
    pub num_lines: u32,
    pub blocks_per_line: u32,
    pub pages_per_block: u32,
    pub logical_pages: u32,
    /// Victim line count at which garbage collection runs.
    pub gc_victim_threshold: u32,
    /// Erase-count spread above which wear-leveling moves cold data.
    pub wl_erase_gap_threshold: u32,
    pub write_buffer_pages: u32,
    pub max_nlb: u32,
    /// Spread garbage collection over later commands using `noise_seed`.
    pub noise_enabled: bool,
    pub noise_seed: u64,
}

impl DeviceConfig {
    /// Small geometry on which full block coverage is reachable in seconds.
    pub fn desk_scale() -> Self {
        Self {
            num_lines: 32,
            blocks_per_line: 2,
            pages_per_block: 16,
            logical_pages: 768,
            gc_victim_threshold: 12,
            wl_erase_gap_threshold: 48,
            write_buffer_pages: 8,
            max_nlb: 16,
            noise_enabled: false,
            noise_seed: 0,
        }
    }

    /// Larger geometry using the 190 victim-line GC trigger.
    pub fn paper_scale() -> Self {
        Self {
            num_lines: 256,
            blocks_per_line: 4,
            pages_per_block: 32,
            logical_pages: 24_576,
            gc_victim_threshold: 190,
            wl_erase_gap_threshold: 48,
            write_buffer_pages: 64,
            max_nlb: 64,
            noise_enabled: false,
            noise_seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "desk-scale" => Ok(Self::desk_scale()),
            "paper-scale" => Ok(Self::paper_scale()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn pages_per_line(&self) -> u32 {
        self.blocks_per_line * self.pages_per_block
    }

    pub fn total_pages(&self) -> u64 {
        u64::from(self.num_lines) * u64::from(self.pages_per_line())
    }

    pub fn total_blocks(&self) -> u32 {
        self.num_lines * self.blocks_per_line
    }

    /// Segment (0..SEGMENTS) holding a logical page.
    pub fn segment_of(&self, lba: u32) -> usize {
        ((u64::from(lba) * SEGMENTS as u64) / u64::from(self.logical_pages)) as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("num_lines", self.num_lines),
            ("blocks_per_line", self.blocks_per_line),
            ("pages_per_block", self.pages_per_block),
            ("write_buffer_pages", self.write_buffer_pages),
            ("max_nlb", self.max_nlb),
        ] {
            if value == 0 {
                return Err(ConfigError::ZeroGeometry(name));
            }
        }
        if self.logical_pages == 0 {
            return Err(ConfigError::NoLogicalPages);
        }
        let physical = self.total_pages();
        // logical <= 0.9 * physical, in integers
        if u64::from(self.logical_pages) * 10 > physical * 9 {
            return Err(ConfigError::InsufficientOverProvisioning {
                logical: u64::from(self.logical_pages),
                physical,
            });
        }
        if self.gc_victim_threshold == 0 {
            return Err(ConfigError::ZeroGcThreshold);
        }
        if self.gc_victim_threshold >= self.num_lines {
            return Err(ConfigError::GcThresholdTooLarge {
                threshold: self.gc_victim_threshold,
                lines: self.num_lines,
            });
        }
        Ok(())
    }
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// The six host I/O commands, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Write,
    Read,
    Compare,
    Flush,
    WriteZeroes,
    WriteUncorrectable,
}

impl Opcode {
    pub const ALL: [Opcode; 6] = [
        Opcode::Write,
        Opcode::Read,
        Opcode::Compare,
        Opcode::Flush,
        Opcode::WriteZeroes,
        Opcode::WriteUncorrectable,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Write => "write",
            Opcode::Read => "read",
            Opcode::Compare => "compare",
            Opcode::Flush => "flush",
            Opcode::WriteZeroes => "write-zeroes",
            Opcode::WriteUncorrectable => "write-uncorrectable",
        }
    }

    /// Label used in ontology listings, e.g. `Write=4`.
    pub fn label(self) -> &'static str {
        match self {
            Opcode::Write => "Write",
            Opcode::Read => "Read",
            Opcode::Compare => "Compare",
            Opcode::Flush => "Flush",
            Opcode::WriteZeroes => "WriteZeroes",
            Opcode::WriteUncorrectable => "WriteUncorrectable",
        }
    }

    /// Whether the command changes FTL state (mapping, buffer or marks).
    pub fn touches_ftl(self) -> bool {
        matches!(
            self,
            Opcode::Write | Opcode::Flush | Opcode::WriteZeroes | Opcode::WriteUncorrectable
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown opcode `{0}`")]
pub struct UnknownOpcode(pub String);

impl FromStr for Opcode {
    type Err = UnknownOpcode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Opcode::ALL
            .into_iter()
            .find(|op| op.name() == norm || op.label().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| UnknownOpcode(s.to_string()))
    }
}

/// A non-empty set of enabled opcodes, iterated in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpcodeSet(u8);

impl OpcodeSet {
    pub const fn empty() -> Self {
        OpcodeSet(0)
    }

    pub const fn all() -> Self {
        OpcodeSet(0b11_1111)
    }

    pub fn write_read() -> Self {
        Self::from_iter([Opcode::Write, Opcode::Read])
    }

    pub fn insert(&mut self, op: Opcode) {
        self.0 |= 1 << op.index();
    }

    pub fn contains(self, op: Opcode) -> bool {
        self.0 & (1 << op.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Enabled opcodes in canonical order.
    pub fn to_vec(self) -> Vec<Opcode> {
        Opcode::ALL.into_iter().filter(|op| self.contains(*op)).collect()
    }

    /// Parses a comma separated list such as `write,read,flush`.
    pub fn parse_list(list: &str) -> Result<Self, UnknownOpcode> {
        let mut set = OpcodeSet::empty();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            set.insert(item.parse()?);
        }
        Ok(set)
    }
}

impl FromIterator<Opcode> for OpcodeSet {
    fn from_iter<I: IntoIterator<Item = Opcode>>(iter: I) -> Self {
        let mut set = OpcodeSet::empty();
        for op in iter {
            set.insert(op);
        }
        set
    }
}

impl fmt::Display for OpcodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.to_vec().into_iter().map(Opcode::name).collect();
        f.write_str(&names.join(","))
    }
}

/// One host command. Flush carries zeroed address fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IoCommand {
    pub opcode: Opcode,
    pub lba: u32,
    pub nlb: u32,
    pub payload_seed: u8,
}

impl IoCommand {
    pub fn new(opcode: Opcode, lba: u32, nlb: u32, payload_seed: u8) -> Self {
        if opcode == Opcode::Flush {
            return Self::flush();
        }
        Self {
            opcode,
            lba,
            nlb,
            payload_seed,
        }
    }

    pub fn flush() -> Self {
        Self {
            opcode: Opcode::Flush,
            lba: 0,
            nlb: 0,
            payload_seed: 0,
        }
    }

    pub fn write(lba: u32, nlb: u32, payload_seed: u8) -> Self {
        Self::new(Opcode::Write, lba, nlb, payload_seed)
    }

    pub fn read(lba: u32, nlb: u32) -> Self {
        Self::new(Opcode::Read, lba, nlb, 0)
    }

    /// Logical pages addressed by the command; empty for Flush.
    pub fn pages(&self) -> std::ops::Range<u32> {
        self.lba..self.lba + self.nlb
    }
}

impl fmt::Display for IoCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.opcode {
            Opcode::Flush => f.write_str("flush"),
            op => write!(
                f,
                "{op}(lba={}, nlb={}, seed={})",
                self.lba, self.nlb, self.payload_seed
            ),
        }
    }
}

/// Monitored firmware state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct StateSnapshot {
    pub victim_line_count: u64,
    pub free_line_count: u64,
    pub total_invalid_pages: u64,
    pub max_erase_count: u64,
    pub total_erase_count: u64,
    pub gc_invocations: u64,
    /// Cumulative pages addressed by host commands, per logical segment.
    pub per_segment_io: [u64; SEGMENTS],
}
