//! State-data feedback: significant-change detection, inverse-frequency
//! variable weights, and the pool of state-changing sequences with its
//! retrieve / reuse / revise / retain lifecycle.

mod ontology;

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::codec::{reorder_suppress_by, Genome, SequenceCodec, TestSequence};
use crate::ssd::{CommandStatus, DeviceConfig, IoCommand, Opcode, StateSnapshot, SEGMENTS};

pub use ontology::{parse_ontology, render_ontology, OntologyError};

/// Firmware variables whose changes drive sequence selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    VictimLineCount,
    FreeLineCount,
    TotalInvalidPages,
    MaxEraseCount,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::VictimLineCount,
        Variable::FreeLineCount,
        Variable::TotalInvalidPages,
        Variable::MaxEraseCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::VictimLineCount => "victim_line_count",
            Variable::FreeLineCount => "free_line_count",
            Variable::TotalInvalidPages => "total_invalid_pages",
            Variable::MaxEraseCount => "max_erase_count",
        }
    }

    pub fn value(self, snap: &StateSnapshot) -> u64 {
        match self {
            Variable::VictimLineCount => snap.victim_line_count,
            Variable::FreeLineCount => snap.free_line_count,
            Variable::TotalInvalidPages => snap.total_invalid_pages,
            Variable::MaxEraseCount => snap.max_erase_count,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Minimum absolute change per variable that counts as significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChangeThresholds(pub [u64; 4]);

impl ChangeThresholds {
    /// One unit of each metered resource; one block's worth of pages for
    /// the invalid-page count.
    pub fn for_device(config: &DeviceConfig) -> Self {
        ChangeThresholds([1, 1, u64::from(config.pages_per_block), 1])
    }

    pub fn get(&self, v: Variable) -> u64 {
        self.0[v.index()]
    }

    pub fn set(&mut self, v: Variable, delta: u64) {
        self.0[v.index()] = delta;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarDelta {
    pub before: u64,
    pub after: u64,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StateDelta {
    pub vars: [VarDelta; 4],
}

impl StateDelta {
    pub fn get(&self, v: Variable) -> VarDelta {
        self.vars[v.index()]
    }

    pub fn is_significant(&self) -> bool {
        self.vars.iter().any(|d| d.significant)
    }

    pub fn significant_vars(&self) -> impl Iterator<Item = Variable> + '_ {
        Variable::ALL.into_iter().filter(|v| self.get(*v).significant)
    }
}

pub fn detect_significant_change(
    before: &StateSnapshot,
    after: &StateSnapshot,
    thresholds: &ChangeThresholds,
) -> StateDelta {
    let mut delta = StateDelta::default();
    for v in Variable::ALL {
        let (b, a) = (v.value(before), v.value(after));
        delta.vars[v.index()] = VarDelta {
            before: b,
            after: a,
            significant: a.abs_diff(b) >= thresholds.get(v),
        };
    }
    delta
}

/// Per-variable change frequencies and the weights derived from them:
/// `weight = 1 / (changes / sequences + epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableWeightTable {
    pub change_count: [u64; 4],
    pub sequences_observed: u64,
    pub epsilon: f64,
}

impl VariableWeightTable {
    pub fn new(epsilon: f64) -> Self {
        Self {
            change_count: [0; 4],
            sequences_observed: 0,
            epsilon,
        }
    }

    pub fn frequency(&self, v: Variable) -> f64 {
        self.change_count[v.index()] as f64 / self.sequences_observed.max(1) as f64
    }

    pub fn weight(&self, v: Variable) -> f64 {
        1.0 / (self.frequency(v) + self.epsilon)
    }

    pub fn observe(&mut self, delta: &StateDelta) {
        self.sequences_observed += 1;
        for v in delta.significant_vars() {
            self.change_count[v.index()] += 1;
        }
    }

    /// `alpha` times the summed weights of the variables that changed.
    pub fn increment(&self, delta: &StateDelta, alpha: f64) -> f64 {
        alpha * delta.significant_vars().map(|v| self.weight(v)).sum::<f64>()
    }
}

pub fn update_variable_weights(
    mut table: VariableWeightTable,
    delta: &StateDelta,
) -> VariableWeightTable {
    table.observe(delta);
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Cold,
    Warm,
    Hot,
}

impl Category {
    pub fn rank(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Cold => "Cold",
            Category::Warm => "Warm",
            Category::Hot => "Hot",
        }
    }

    /// Bins 1-5 are cold, 6-9 warm and 10 hot.
    fn from_bin(bin: u64) -> Self {
        match bin {
            0..=5 => Category::Cold,
            6..=9 => Category::Warm,
            _ => Category::Hot,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hot/Warm/Cold category of each logical segment's I/O accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreconditionVector(pub [Category; SEGMENTS]);

impl PreconditionVector {
    pub fn category(&self, segment: usize) -> Category {
        self.0[segment]
    }

    /// Two thermometer bits per segment (Cold 00, Warm 01, Hot 11), so the
    /// L1 distance is the popcount of the XOR.
    fn thermometer(&self) -> u32 {
        self.0.iter().enumerate().fold(0, |acc, (i, c)| {
            let bits = match c {
                Category::Cold => 0b00,
                Category::Warm => 0b01,
                Category::Hot => 0b11,
            };
            acc | bits << (2 * i)
        })
    }
}

impl Default for PreconditionVector {
    fn default() -> Self {
        PreconditionVector([Category::Cold; SEGMENTS])
    }
}

/// Bins each segment's count into tenths of the busiest segment.
pub fn encode_precondition(snapshot: &StateSnapshot) -> PreconditionVector {
    let counts = &snapshot.per_segment_io;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut out = PreconditionVector::default();
    if max == 0 {
        return out;
    }
    for (slot, &count) in out.0.iter_mut().zip(counts) {
        // ceil(10 * c / max) without going through floats
        let bin = ((10 * u128::from(count)).div_ceil(u128::from(max)) as u64).clamp(1, 10);
        *slot = Category::from_bin(bin);
    }
    out
}

/// L1 distance with Cold = 0, Warm = 1, Hot = 2.
pub fn manhattan_distance(a: &PreconditionVector, b: &PreconditionVector) -> u32 {
    (a.thermometer() ^ b.thermometer()).count_ones()
}

/// Commands of a sequence split by the category of the segment they target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InputSummary {
    pub hot: u32,
    pub warm: u32,
    pub cold: u32,
}

impl InputSummary {
    pub fn of(commands: &[IoCommand], pre: &PreconditionVector, config: &DeviceConfig) -> Self {
        let mut out = InputSummary::default();
        for cmd in commands {
            match pre.category(config.segment_of(cmd.lba.min(config.logical_pages - 1))) {
                Category::Hot => out.hot += 1,
                Category::Warm => out.warm += 1,
                Category::Cold => out.cold += 1,
            }
        }
        out
    }
}

/// Ontology entry for a sequence that changed device state.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: u64,
    pub name: String,
    pub precondition: PreconditionVector,
    pub input_summary: InputSummary,
    /// Command counts indexed by [`Opcode::index`].
    pub operation_histogram: [u32; 6],
    /// Per-command success, in sequence order.
    pub outcomes: Vec<bool>,
    pub weight: f64,
    pub replay_attempts: u32,
    pub genome: Genome,
}

impl SequenceRecord {
    /// (success count, fail count).
    pub fn expectation(&self) -> (u32, u32) {
        let ok = self.outcomes.iter().filter(|s| **s).count() as u32;
        (ok, self.outcomes.len() as u32 - ok)
    }

    pub fn sequence_len(&self) -> usize {
        self.outcomes.len()
    }

    fn describe(&mut self, commands: &[IoCommand], config: &DeviceConfig) {
        self.input_summary = InputSummary::of(commands, &self.precondition, config);
        self.operation_histogram = histogram(commands);
    }
}

pub fn histogram(commands: &[IoCommand]) -> [u32; 6] {
    let mut h = [0u32; 6];
    for cmd in commands {
        h[cmd.opcode.index()] += 1;
    }
    h
}

pub fn record_name(id: u64) -> String {
    format!("Successful Test Sequence {id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("sequence caused no significant state change")]
    NotSignificant,
    #[error("no pool record with id {0}")]
    UnknownRecord(u64),
    #[error("{commands} commands but {results} results")]
    ResultCountMismatch { commands: usize, results: usize },
}

/// Tunables of the state-aware strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams {
    pub thresholds: ChangeThresholds,
    pub epsilon: f64,
    /// Scale of the weight increment on a significant change.
    pub alpha: f64,
    /// Demotion factor for a replay that changed nothing.
    pub beta: f64,
    /// Records below this weight are dropped once retries are exhausted.
    pub w_min: f64,
    pub retention_attempts: u32,
    pub p_reuse: f64,
    /// Chance of one mutation pass before a replay.
    pub light_mutation: f64,
    pub pool_capacity: usize,
}

impl EngineParams {
    pub fn for_device(config: &DeviceConfig) -> Self {
        Self {
            thresholds: ChangeThresholds::for_device(config),
            epsilon: 0.01,
            alpha: 1.0,
            beta: 0.5,
            w_min: 0.1,
            retention_attempts: 3,
            p_reuse: 0.5,
            light_mutation: 0.1,
            pool_capacity: 256,
        }
    }
}

/// Bounded pool of successful sequences. Ids are never reused.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessPool {
    records: Vec<SequenceRecord>,
    /// Thermometer code of each record's precondition, index-aligned.
    codes: Vec<u32>,
    capacity: usize,
    next_id: u64,
}

impl SuccessPool {
    pub fn new(capacity: usize) -> Self {
        Self {
            records: Vec::new(),
            codes: Vec::new(),
            capacity: capacity.max(1),
            next_id: 1,
        }
    }

    /// Rebuilds a pool; `next_id` is raised past every present id.
    pub fn from_parts(records: Vec<SequenceRecord>, capacity: usize, next_id: u64) -> Self {
        let floor = records.iter().map(|r| r.id + 1).max().unwrap_or(1);
        Self {
            codes: records.iter().map(|r| r.precondition.thermometer()).collect(),
            records,
            capacity: capacity.max(1),
            next_id: next_id.max(floor),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&SequenceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    fn get_mut(&mut self, id: u64) -> Option<&mut SequenceRecord> {
        self.records.iter_mut().find(|r| r.id == id)
    }

    fn push(&mut self, record: SequenceRecord) {
        self.codes.push(record.precondition.thermometer());
        self.records.push(record);
    }

    fn remove_at(&mut self, pos: usize) -> SequenceRecord {
        self.codes.remove(pos);
        self.records.remove(pos)
    }

    fn remove(&mut self, id: u64) {
        if let Some(pos) = self.records.iter().position(|r| r.id == id) {
            self.remove_at(pos);
        }
    }

    /// Multiplies every weight by `factor`.
    pub fn scale_weights(&mut self, factor: f64) {
        for r in &mut self.records {
            r.weight *= factor;
        }
    }

    fn evict_lowest(&mut self) -> Option<u64> {
        let (pos, _) = self.records.iter().enumerate().min_by(|(_, a), (_, b)| {
            a.weight.total_cmp(&b.weight).then(a.id.cmp(&b.id))
        })?;
        Some(self.remove_at(pos).id)
    }
}

/// Record maximizing `weight / (1 + distance)`; ties go to the lower id.
pub fn retrieve_best<'a>(
    pool: &'a SuccessPool,
    current: &PreconditionVector,
) -> Option<&'a SequenceRecord> {
    let code = current.thermometer();
    let mut best: Option<(f64, &SequenceRecord)> = None;
    for (r, c) in pool.records.iter().zip(&pool.codes) {
        let score = r.weight / (1.0 + f64::from((code ^ c).count_ones()));
        let better = match best {
            None => true,
            Some((s, b)) => score.total_cmp(&s).then(b.id.cmp(&r.id)).is_gt(),
        };
        if better {
            best = Some((score, r));
        }
    }
    best.map(|(_, r)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted { id: u64, evicted: Option<u64> },
    Refreshed { id: u64 },
}

/// Stores a state-changing sequence, or raises the weight of an identical
/// stored genome.
#[allow(clippy::too_many_arguments)]
pub fn admit_or_refresh(
    pool: &mut SuccessPool,
    seq: &TestSequence,
    genome: &Genome,
    delta: &StateDelta,
    weights: &VariableWeightTable,
    snapshot_before: &StateSnapshot,
    results: &[CommandStatus],
    params: &EngineParams,
    config: &DeviceConfig,
) -> Result<Admission, EngineError> {
    if !delta.is_significant() {
        return Err(EngineError::NotSignificant);
    }
    if results.len() != seq.len() {
        return Err(EngineError::ResultCountMismatch {
            commands: seq.len(),
            results: results.len(),
        });
    }
    let gain = weights.increment(delta, params.alpha);
    if let Some(existing) = pool.records.iter_mut().find(|r| r.genome == *genome) {
        existing.weight += gain;
        return Ok(Admission::Refreshed { id: existing.id });
    }
    let id = pool.next_id;
    pool.next_id += 1;
    let mut record = SequenceRecord {
        id,
        name: record_name(id),
        precondition: encode_precondition(snapshot_before),
        input_summary: InputSummary::default(),
        operation_histogram: [0; 6],
        outcomes: results.iter().map(|s| *s == CommandStatus::Success).collect(),
        weight: gain,
        replay_attempts: 0,
        genome: genome.clone(),
    };
    record.describe(seq, config);
    pool.push(record);
    let evicted = if pool.records.len() > pool.capacity {
        pool.evict_lowest()
    } else {
        None
    };
    Ok(Admission::Admitted { id, evicted })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Revision {
    Reinforced { weight: f64 },
    Demoted { weight: f64 },
    Discarded,
}

/// Updates a record after it was replayed.
#[allow(clippy::too_many_arguments)]
pub fn revise_or_retain<R: Rng + ?Sized>(
    pool: &mut SuccessPool,
    record_id: u64,
    replay_delta: &StateDelta,
    weights: &VariableWeightTable,
    params: &EngineParams,
    codec: &SequenceCodec,
    config: &DeviceConfig,
    rng: &mut R,
) -> Result<Revision, EngineError> {
    let record = pool
        .get_mut(record_id)
        .ok_or(EngineError::UnknownRecord(record_id))?;
    record.replay_attempts += 1;
    if replay_delta.is_significant() {
        record.weight += weights.increment(replay_delta, params.alpha);
        return Ok(Revision::Reinforced {
            weight: record.weight,
        });
    }
    record.weight *= params.beta;
    if record.weight < params.w_min && record.replay_attempts >= params.retention_attempts {
        pool.remove(record_id);
        return Ok(Revision::Discarded);
    }
    let seq = codec.decode(&record.genome);
    let mut paired: Vec<(IoCommand, bool)> = seq
        .iter()
        .copied()
        .zip(record.outcomes.iter().copied().chain(std::iter::repeat(true)))
        .collect();
    paired = reorder_suppress_by(&paired, |(cmd, _)| !cmd.opcode.touches_ftl(), rng);
    let commands: Vec<IoCommand> = paired.iter().map(|(c, _)| *c).collect();
    if let Some(genome) = codec.encode(&commands) {
        record.genome = genome;
        record.outcomes = paired.iter().map(|(_, ok)| *ok).collect();
        record.describe(&commands, config);
    }
    Ok(Revision::Demoted {
        weight: record.weight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Replay(u64),
    Mutate,
}

/// Replays the best-matching record with probability `p_reuse`.
pub fn choose_action<R: Rng + ?Sized>(
    pool: &SuccessPool,
    current: &PreconditionVector,
    rng: &mut R,
    p_reuse: f64,
) -> Action {
    if pool.is_empty() || !rng.gen_bool(p_reuse.clamp(0.0, 1.0)) {
        return Action::Mutate;
    }
    retrieve_best(pool, current).map_or(Action::Mutate, |r| Action::Replay(r.id))
}

/// Opcode counts of a sequence in canonical order, skipping zeros.
pub fn nonzero_operations(h: &[u32; 6]) -> impl Iterator<Item = (Opcode, u32)> + '_ {
    Opcode::ALL
        .into_iter()
        .map(|op| (op, h[op.index()]))
        .filter(|(_, n)| *n > 0)
}
