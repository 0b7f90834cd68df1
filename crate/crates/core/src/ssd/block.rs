use std::fmt;

use super::{Opcode, OpcodeSet};

macro_rules! blocks {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Instrumented firmware basic blocks.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        #[repr(u8)]
        pub enum Block {
            $($variant),*
        }

        impl Block {
            pub const ALL: &'static [Block] = &[$(Block::$variant),*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Block::$variant => $name),*
                }
            }
        }
    };
}

blocks! {
    WriteEntry => "WRITE_ENTRY",
    WriteBuffered => "WRITE_BUFFERED",
    WriteCoalesce => "WRITE_COALESCE",
    WriteBufferFull => "WRITE_BUFFER_FULL",
    FtlCommit => "FTL_COMMIT",
    FtlProgramFresh => "FTL_PROGRAM_FRESH",
    FtlInvalidate => "FTL_INVALIDATE",
    FtlLineClosed => "FTL_LINE_CLOSED",
    ReadEntry => "READ_ENTRY",
    ReadUnmapped => "READ_UNMAPPED",
    ReadBufferHit => "READ_BUFFER_HIT",
    ReadFlash => "READ_FLASH",
    ReadRelocated => "READ_RELOCATED",
    ReadUncorrectable => "READ_UNCORRECTABLE",
    CompareEntry => "COMPARE_ENTRY",
    CompareUnmapped => "COMPARE_UNMAPPED",
    CompareMatch => "COMPARE_MATCH",
    CompareMismatch => "COMPARE_MISMATCH",
    CompareUncorrectable => "COMPARE_UNCORRECTABLE",
    FlushEntry => "FLUSH_ENTRY",
    FlushEmpty => "FLUSH_EMPTY",
    FlushCommit => "FLUSH_COMMIT",
    WzEntry => "WZ_ENTRY",
    WzCommit => "WZ_COMMIT",
    WzDiscardBuffered => "WZ_DISCARD_BUFFERED",
    WzClearsUncorrectable => "WZ_CLEARS_UNCORRECTABLE",
    WuEntry => "WU_ENTRY",
    WuMark => "WU_MARK",
    WuAlreadyMarked => "WU_ALREADY_MARKED",
    WuInvalidate => "WU_INVALIDATE",
    WuDiscardBuffered => "WU_DISCARD_BUFFERED",
    UncorrectableClearedByWrite => "UNCORRECTABLE_CLEARED_BY_WRITE",
    GcTrigger => "GC_TRIGGER",
    GcSelectVictim => "GC_SELECT_VICTIM",
    GcRelocate => "GC_RELOCATE",
    GcEmptyVictim => "GC_EMPTY_VICTIM",
    GcErase => "GC_ERASE",
    WlTrigger => "WL_TRIGGER",
    WlSwap => "WL_SWAP",
}

impl Block {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Block> {
        Block::ALL.iter().copied().find(|b| b.name() == name)
    }

    /// Whether the block can execute when only `ops` are ever issued.
    pub fn reachable_with(self, ops: OpcodeSet) -> bool {
        use Block::*;
        use Opcode::*;
        let has = |op| ops.contains(op);
        // Flash is programmed by buffered writes or by write-zeroes.
        let programs = has(Write) || has(WriteZeroes);
        match self {
            WriteEntry | WriteBuffered | WriteCoalesce | WriteBufferFull => has(Write),
            FtlCommit | FtlProgramFresh | FtlInvalidate | FtlLineClosed => programs,
            GcTrigger | GcSelectVictim | GcRelocate | GcEmptyVictim | GcErase => programs,
            WlTrigger | WlSwap => programs,
            ReadEntry | ReadUnmapped => has(Read),
            ReadBufferHit => has(Read) && has(Write),
            ReadFlash | ReadRelocated => has(Read) && programs,
            ReadUncorrectable => has(Read) && has(WriteUncorrectable),
            CompareEntry | CompareUnmapped => has(Compare),
            CompareMatch | CompareMismatch => has(Compare) && programs,
            CompareUncorrectable => has(Compare) && has(WriteUncorrectable),
            FlushEntry | FlushEmpty => has(Flush),
            FlushCommit => has(Flush) && has(Write),
            WzEntry | WzCommit => has(WriteZeroes),
            WzDiscardBuffered => has(WriteZeroes) && has(Write),
            WzClearsUncorrectable => has(WriteZeroes) && has(WriteUncorrectable),
            WuEntry | WuMark | WuAlreadyMarked => has(WriteUncorrectable),
            WuInvalidate => has(WriteUncorrectable) && programs,
            WuDiscardBuffered => has(WriteUncorrectable) && has(Write),
            UncorrectableClearedByWrite => has(WriteUncorrectable) && has(Write),
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bit set over [`Block`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct BlockSet(u64);

const _: () = assert!(Block::ALL.len() <= 64);

impl BlockSet {
    pub const fn empty() -> Self {
        BlockSet(0)
    }

    pub fn insert(&mut self, block: Block) -> bool {
        let bit = 1u64 << block.index();
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    pub fn contains(self, block: Block) -> bool {
        self.0 & (1u64 << block.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: BlockSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: BlockSet) -> BlockSet {
        BlockSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Block> {
        Block::ALL.iter().copied().filter(move |b| self.contains(*b))
    }
}

impl FromIterator<Block> for BlockSet {
    fn from_iter<I: IntoIterator<Item = Block>>(iter: I) -> Self {
        let mut set = BlockSet::empty();
        for b in iter {
            set.insert(b);
        }
        set
    }
}

/// Blocks reachable under `enabled`: the denominator of full I/O coverage.
///
/// Returns `None` for an empty opcode set.
pub fn instrumented_block_universe(enabled: OpcodeSet) -> Option<BlockSet> {
    if enabled.is_empty() {
        return None;
    }
    Some(
        Block::ALL
            .iter()
            .copied()
            .filter(|b| b.reachable_with(enabled))
            .collect(),
    )
}
