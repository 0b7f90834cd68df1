//! Campaign-global block coverage.

use crate::ssd::{Block, BlockSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMap {
    universe: BlockSet,
    hit: BlockSet,
    first_hit: Vec<Option<u64>>,
}

impl CoverageMap {
    /// # Panics
    ///
    /// If `universe` is empty.
    pub fn new(universe: BlockSet) -> Self {
        assert!(!universe.is_empty(), "coverage universe must be nonempty");
        Self {
            universe,
            hit: BlockSet::empty(),
            first_hit: vec![None; Block::ALL.len()],
        }
    }

    /// Records one command's trace and returns how many blocks were new.
    /// Blocks outside the universe are ignored.
    pub fn record_trace(&mut self, fired: &[Block], cmd_ordinal: u64) -> usize {
        let mut fresh = 0;
        for &block in fired {
            if self.universe.contains(block) && self.hit.insert(block) {
                self.first_hit[block.index()] = Some(cmd_ordinal);
                fresh += 1;
            }
        }
        fresh
    }

    pub fn coverage_ratio(&self) -> f64 {
        self.hit.len() as f64 / self.universe.len() as f64
    }

    pub fn is_complete(&self) -> bool {
        self.hit == self.universe
    }

    pub fn universe(&self) -> BlockSet {
        self.universe
    }

    pub fn hit(&self) -> BlockSet {
        self.hit
    }

    pub fn hit_count(&self) -> usize {
        self.hit.len()
    }

    pub fn first_hit(&self, block: Block) -> Option<u64> {
        self.first_hit[block.index()]
    }

    /// Universe blocks not yet executed.
    pub fn missing(&self) -> BlockSet {
        self.universe.difference(self.hit)
    }
}

/// `hit / universe` as a fraction.
pub fn coverage_ratio(map: &CoverageMap) -> f64 {
    map.coverage_ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssd::{instrumented_block_universe, OpcodeSet};
    use proptest::prelude::*;

    fn write_read_map() -> CoverageMap {
        CoverageMap::new(instrumented_block_universe(OpcodeSet::write_read()).unwrap())
    }

    #[test]
    fn record_trace_deltas() {
        let mut map = write_read_map();
        assert_eq!(map.coverage_ratio(), 0.0);
        let trace = [Block::WriteEntry, Block::WriteBuffered];
        assert_eq!(map.record_trace(&trace, 0), 2);
        assert_eq!(map.record_trace(&trace, 1), 0);
        assert_eq!(map.record_trace(&[Block::WriteEntry, Block::ReadEntry], 2), 1);
        assert_eq!(map.first_hit(Block::ReadEntry), Some(2));
        assert_eq!(map.first_hit(Block::WriteEntry), Some(0));
    }

    #[test]
    fn blocks_outside_universe_are_ignored() {
        let mut map = write_read_map();
        assert_eq!(map.record_trace(&[Block::FlushEntry, Block::WuMark], 0), 0);
        assert_eq!(map.hit_count(), 0);
    }

    #[test]
    fn full_universe_gives_ratio_one() {
        let universe = instrumented_block_universe(OpcodeSet::write_read()).unwrap();
        let mut map = CoverageMap::new(universe);
        let all: Vec<_> = universe.iter().collect();
        map.record_trace(&all, 7);
        assert_eq!(map.coverage_ratio(), 1.0);
        assert!(map.is_complete());
        assert!(map.missing().is_empty());
    }

    #[test]
    fn partial_ratio() {
        let universe = instrumented_block_universe(OpcodeSet::all()).unwrap();
        let mut map = CoverageMap::new(universe);
        let some: Vec<_> = universe.iter().take(30).collect();
        map.record_trace(&some, 0);
        assert_eq!(map.coverage_ratio(), 30.0 / universe.len() as f64);
    }

    proptest! {
        #[test]
        fn monotone_and_deltas_sum_to_hits(
            traces in proptest::collection::vec(
                proptest::collection::vec(0usize..Block::ALL.len(), 0..8), 0..64)
        ) {
            let mut map = CoverageMap::new(instrumented_block_universe(OpcodeSet::write_read()).unwrap());
            let mut total = 0;
            let mut last = 0.0;
            for (i, t) in traces.iter().enumerate() {
                let fired: Vec<Block> = t.iter().map(|&i| Block::ALL[i]).collect();
                total += map.record_trace(&fired, i as u64);
                let ratio = map.coverage_ratio();
                prop_assert!(ratio >= last);
                prop_assert!((0.0..=1.0).contains(&ratio));
                last = ratio;
            }
            prop_assert_eq!(total, map.hit_count());
            prop_assert!(map.hit().is_subset(map.universe()));
        }
    }
}
