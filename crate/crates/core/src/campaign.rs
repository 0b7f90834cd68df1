//! Campaign loop for the random, coverage-guided and state-aware strategies.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{initial_seed, mutate, Genome, SequenceCodec, DEFAULT_SEQ_LIMIT};
use crate::coverage::CoverageMap;
use crate::engine::{
    admit_or_refresh, choose_action, detect_significant_change, encode_precondition,
    revise_or_retain, Action, Admission, EngineParams, SuccessPool, VariableWeightTable,
};
use crate::ssd::{
    instrumented_block_universe, reset_device, Block, CommandStatus, ConfigError, DeviceConfig,
    FaultEvent, FaultKind, FaultSpec, OpcodeSet, StateSnapshot,
};

/// Commands between two samples of the coverage and state series.
pub const DEFAULT_SAMPLE_INTERVAL: u64 = 1000;

/// Decorrelates the state engine's random stream from the mutation stream.
const STATE_STREAM: u64 = 0x5EED_57A7_E000_0001;

/// How often the wall clock is consulted, in commands.
const CLOCK_INTERVAL: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    CoverageOnly,
    StateAware,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::CoverageOnly, Strategy::StateAware];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::CoverageOnly => "coverage",
            Strategy::StateAware => "state-aware",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy `{0}` (expected random, coverage or state-aware)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub strategy: Strategy,
    pub device: DeviceConfig,
    pub enabled: OpcodeSet,
    pub seq_limit: usize,
    pub rng_seed: u64,
    pub budget_commands: u64,
    pub budget_time: Duration,
    pub faults: Vec<FaultSpec>,
    pub engine: EngineParams,
    pub stop_on_full_coverage: bool,
    pub sample_interval: u64,
}

impl CampaignConfig {
    /// Desk-scale write/read campaign with the default fault set.
    pub fn new(strategy: Strategy, rng_seed: u64) -> Self {
        let device = DeviceConfig::desk_scale();
        Self {
            strategy,
            engine: EngineParams::for_device(&device),
            device,
            enabled: OpcodeSet::write_read(),
            seq_limit: DEFAULT_SEQ_LIMIT,
            rng_seed,
            budget_commands: 10_000_000,
            budget_time: Duration::from_secs(3600),
            faults: crate::ssd::default_fault_set(),
            stop_on_full_coverage: true,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        self.device.validate()?;
        if self.enabled.is_empty() {
            return Err(CampaignError::NoOpcodes);
        }
        if !(1..=10_000).contains(&self.seq_limit) {
            return Err(CampaignError::SeqLimit(self.seq_limit));
        }
        if self.budget_commands == 0 || self.budget_time.is_zero() {
            return Err(CampaignError::ZeroBudget);
        }
        if self.sample_interval == 0 {
            return Err(CampaignError::ZeroSampleInterval);
        }
        let e = &self.engine;
        if !(0.0..=1.0).contains(&e.p_reuse) || !(0.0..=1.0).contains(&e.light_mutation) {
            return Err(CampaignError::Engine("probabilities must lie in [0, 1]"));
        }
        if !(e.epsilon > 0.0 && e.alpha >= 0.0 && e.beta >= 0.0 && e.w_min >= 0.0) {
            return Err(CampaignError::Engine("epsilon must be positive and alpha, beta, w_min non-negative"));
        }
        if e.pool_capacity == 0 {
            return Err(CampaignError::Engine("pool capacity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Device(#[from] ConfigError),
    #[error("at least one opcode must be enabled")]
    NoOpcodes,
    #[error("seq_limit {0} is outside 1..=10000")]
    SeqLimit(usize),
    #[error("command and time budgets must be positive")]
    ZeroBudget,
    #[error("sample interval must be positive")]
    ZeroSampleInterval,
    #[error("invalid engine parameter: {0}")]
    Engine(&'static str),
}

/// One deduplicated fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashRecord {
    pub fault_id: u16,
    pub kind: FaultKind,
    pub first_cmd_ordinal: u64,
    pub occurrence_count: u64,
}

/// Sampled coverage and device state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRow {
    pub cmd_index: u64,
    pub coverage_blocks: usize,
    pub coverage_ratio: f64,
    pub victim_line_count: u64,
    pub free_line_count: u64,
    pub total_invalid_pages: u64,
    pub max_erase_count: u64,
    pub gc_invocations: u64,
}

/// Operation histogram of a sequence when it entered the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissionRow {
    pub record_id: u64,
    pub cmd_index: u64,
    pub histogram: [u32; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignStats {
    pub strategy: Strategy,
    pub seed: u64,
    pub commands_executed: u64,
    pub sequences_executed: u64,
    pub replays: u64,
    pub wall_time: Duration,
    pub coverage_blocks: usize,
    pub universe_blocks: usize,
    pub final_coverage_ratio: f64,
    pub commands_to_full_coverage: Option<u64>,
    /// Command ordinal of the first threshold garbage collection.
    pub first_gc_trigger: Option<u64>,
    pub crash_records: Vec<CrashRecord>,
    pub hang_records: Vec<CrashRecord>,
    pub events: Vec<EventRow>,
    pub admissions: Vec<AdmissionRow>,
}

impl CampaignStats {
    pub fn new(strategy: Strategy, seed: u64, universe_blocks: usize) -> Self {
        Self {
            strategy,
            seed,
            commands_executed: 0,
            sequences_executed: 0,
            replays: 0,
            wall_time: Duration::ZERO,
            coverage_blocks: 0,
            universe_blocks,
            final_coverage_ratio: 0.0,
            commands_to_full_coverage: None,
            first_gc_trigger: None,
            crash_records: Vec::new(),
            hang_records: Vec::new(),
            events: Vec::new(),
            admissions: Vec::new(),
        }
    }

    pub fn crashes(&self) -> usize {
        self.crash_records.len()
    }

    pub fn hangs(&self) -> usize {
        self.hang_records.len()
    }

    /// Deduplicated crash and hang count.
    pub fn faults_found(&self) -> usize {
        self.crashes() + self.hangs()
    }
}

/// Counts a fault occurrence, creating its record on first sight.
pub fn record_fault(stats: &mut CampaignStats, event: FaultEvent, cmd_ordinal: u64) {
    let records = match event.kind {
        FaultKind::Crash => &mut stats.crash_records,
        FaultKind::Hang => &mut stats.hang_records,
    };
    match records.iter_mut().find(|r| r.fault_id == event.fault_id) {
        Some(r) => r.occurrence_count += 1,
        None => records.push(CrashRecord {
            fault_id: event.fault_id,
            kind: event.kind,
            first_cmd_ordinal: cmd_ordinal,
            occurrence_count: 1,
        }),
    }
}

pub fn stop_condition(stats: &CampaignStats, config: &CampaignConfig) -> bool {
    (config.stop_on_full_coverage && stats.final_coverage_ratio >= 1.0)
        || stats.commands_executed >= config.budget_commands
        || stats.wall_time >= config.budget_time
}

/// Everything a campaign leaves behind.
#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub stats: CampaignStats,
    pub pool: SuccessPool,
    pub corpus: Vec<Genome>,
    pub coverage: CoverageMap,
    pub final_state: StateSnapshot,
    /// Host and total flash page programs.
    pub programs: (u64, u64),
}

struct Runner<'a> {
    config: &'a CampaignConfig,
    device: crate::ssd::Device,
    coverage: CoverageMap,
    stats: CampaignStats,
    started: Instant,
    gc_burst: bool,
}

impl Runner<'_> {
    fn event_row(&self, cmd_index: u64, snap: &StateSnapshot) -> EventRow {
        EventRow {
            cmd_index,
            coverage_blocks: self.coverage.hit_count(),
            coverage_ratio: self.coverage.coverage_ratio(),
            victim_line_count: snap.victim_line_count,
            free_line_count: snap.free_line_count,
            total_invalid_pages: snap.total_invalid_pages,
            max_erase_count: snap.max_erase_count,
            gc_invocations: snap.gc_invocations,
        }
    }

    /// Runs a sequence until it ends or the campaign must stop. Returns the
    /// per-command statuses, whether coverage grew, and whether to stop.
    fn execute(&mut self, genome: &Genome, codec: &SequenceCodec) -> (Vec<CommandStatus>, bool, bool) {
        let seq = codec.decode(genome);
        let mut statuses = Vec::with_capacity(seq.len());
        let mut grew = false;
        self.stats.sequences_executed += 1;
        for cmd in seq.iter() {
            if stop_condition(&self.stats, self.config) {
                return (statuses, grew, true);
            }
            let result = self.device.apply(cmd, &self.config.faults);
            self.stats.commands_executed += 1;
            let ordinal = self.stats.commands_executed;
            statuses.push(result.status);
            if let Some(event) = result.fault {
                record_fault(&mut self.stats, event, ordinal);
            }
            if self.coverage.record_trace(&result.fired, ordinal) > 0 {
                grew = true;
                self.stats.coverage_blocks = self.coverage.hit_count();
                self.stats.final_coverage_ratio = self.coverage.coverage_ratio();
                if self.coverage.is_complete() {
                    self.stats.commands_to_full_coverage = Some(ordinal);
                }
            }
            let triggered = result.fired.contains(&Block::GcTrigger);
            if triggered && self.stats.first_gc_trigger.is_none() {
                self.stats.first_gc_trigger = Some(ordinal);
            }
            match result.gc_trigger {
                Some(pre) if !self.gc_burst => {
                    let row = self.event_row(ordinal, &pre);
                    self.stats.events.push(row);
                }
                _ => {}
            }
            self.gc_burst = result.gc_trigger.is_some();
            if ordinal.is_multiple_of(self.config.sample_interval) {
                let row = self.event_row(ordinal, &self.device.snapshot());
                self.stats.events.push(row);
            }
            if ordinal.is_multiple_of(CLOCK_INTERVAL) {
                self.stats.wall_time = self.started.elapsed();
            }
        }
        let stop = stop_condition(&self.stats, self.config);
        (statuses, grew, stop)
    }
}

/// Runs one campaign on a freshly reset device.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutcome, CampaignError> {
    config.validate()?;
    let started = Instant::now();
    let device = reset_device(config.device.clone())?;
    let universe = instrumented_block_universe(config.enabled).ok_or(CampaignError::NoOpcodes)?;
    let codec = SequenceCodec::new(config.enabled, &config.device, config.seq_limit)
        .ok_or(CampaignError::NoOpcodes)?;
    let mut runner = Runner {
        config,
        device,
        coverage: CoverageMap::new(universe),
        stats: CampaignStats::new(config.strategy, config.rng_seed, universe.len()),
        started,
        gc_burst: false,
    };
    let mut mut_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut state_rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ STATE_STREAM);
    let mut corpus: Vec<Genome> = Vec::new();
    let mut pool = SuccessPool::new(config.engine.pool_capacity);
    let mut weights = VariableWeightTable::new(config.engine.epsilon);
    let state_aware = config.strategy == Strategy::StateAware;

    let mut next = Some(initial_seed());
    loop {
        let (genome, replay_of) = match next.take() {
            Some(seed) => (seed, None),
            None => pick(config.strategy, &codec, &corpus, &pool, &runner, &mut mut_rng, &mut state_rng),
        };
        let before = runner.device.snapshot();
        let (statuses, grew, stop) = runner.execute(&genome, &codec);
        if replay_of.is_some() {
            runner.stats.replays += 1;
        }
        if grew && config.strategy != Strategy::Random {
            corpus.push(genome.clone());
        }
        if state_aware && !statuses.is_empty() {
            let after = runner.device.snapshot();
            let delta = detect_significant_change(&before, &after, &config.engine.thresholds);
            weights.observe(&delta);
            let mut admit = delta.is_significant();
            if let Some(id) = replay_of {
                let original = pool.get(id).map(|r| r.genome.clone());
                revise_or_retain(
                    &mut pool, id, &delta, &weights, &config.engine, &codec, &config.device,
                    &mut state_rng,
                )
                .expect("replayed record is in the pool");
                // an unmodified replay is credited through revision only
                admit &= original.as_ref() != Some(&genome);
            }
            if admit {
                let seq = codec.decode(&genome);
                let seq = crate::codec::TestSequence::new(seq[..statuses.len()].to_vec());
                let got = admit_or_refresh(
                    &mut pool, &seq, &genome, &delta, &weights, &before, &statuses,
                    &config.engine, &config.device,
                );
                if let Ok(Admission::Admitted { id, .. }) = got {
                    runner.stats.admissions.push(AdmissionRow {
                        record_id: id,
                        cmd_index: runner.stats.commands_executed,
                        histogram: crate::engine::histogram(&seq),
                    });
                }
            }
        }
        if stop {
            break;
        }
    }

    let mut stats = runner.stats;
    stats.wall_time = started.elapsed();
    let final_state = runner.device.snapshot();
    let last = stats.events.last().map(|e| e.cmd_index);
    if last != Some(stats.commands_executed) || stats.events.is_empty() {
        stats.events.push(EventRow {
            cmd_index: stats.commands_executed,
            coverage_blocks: runner.coverage.hit_count(),
            coverage_ratio: runner.coverage.coverage_ratio(),
            victim_line_count: final_state.victim_line_count,
            free_line_count: final_state.free_line_count,
            total_invalid_pages: final_state.total_invalid_pages,
            max_erase_count: final_state.max_erase_count,
            gc_invocations: final_state.gc_invocations,
        });
    }
    Ok(CampaignOutcome {
        stats,
        pool,
        corpus,
        coverage: runner.coverage,
        final_state,
        programs: runner.device.program_counts(),
    })
}

/// Chooses the next genome and, for replays, the pool record it came from.
fn pick(
    strategy: Strategy,
    codec: &SequenceCodec,
    corpus: &[Genome],
    pool: &SuccessPool,
    runner: &Runner<'_>,
    mut_rng: &mut ChaCha8Rng,
    state_rng: &mut ChaCha8Rng,
) -> (Genome, Option<u64>) {
    if strategy == Strategy::Random || corpus.is_empty() {
        return (codec.random_genome(mut_rng), None);
    }
    if strategy == Strategy::StateAware {
        let current = encode_precondition(&runner.device.snapshot());
        let p_reuse = runner.config.engine.p_reuse;
        if let Action::Replay(id) = choose_action(pool, &current, state_rng, p_reuse) {
            let mut genome = pool.get(id).expect("retrieved from pool").genome.clone();
            if state_rng.gen_bool(runner.config.engine.light_mutation) {
                let donor = &corpus[state_rng.gen_range(0..corpus.len())];
                genome = mutate(&genome, Some(donor), state_rng, codec.seq_limit());
            }
            return (genome, Some(id));
        }
    }
    let mut genome = corpus[mut_rng.gen_range(0..corpus.len())].clone();
    let rounds = 1 << mut_rng.gen_range(0..3);
    for _ in 0..rounds {
        let donor = &corpus[mut_rng.gen_range(0..corpus.len())];
        genome = mutate(&genome, Some(donor), mut_rng, codec.seq_limit());
    }
    (genome, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssd::parse_fault_set;

    fn quick(strategy: Strategy, seed: u64) -> CampaignConfig {
        let mut c = CampaignConfig::new(strategy, seed);
        c.budget_commands = 20_000;
        c.stop_on_full_coverage = false;
        c
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>(), Ok(s));
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn fault_dedup() {
        let mut stats = CampaignStats::new(Strategy::Random, 0, 10);
        let crash = FaultEvent { fault_id: 4, kind: FaultKind::Crash };
        for i in 0..50 {
            record_fault(&mut stats, crash, 10 + i);
        }
        assert_eq!(stats.crashes(), 1);
        assert_eq!(stats.crash_records[0].occurrence_count, 50);
        assert_eq!(stats.crash_records[0].first_cmd_ordinal, 10);
        record_fault(&mut stats, FaultEvent { fault_id: 5, kind: FaultKind::Crash }, 99);
        assert_eq!(stats.crashes(), 2);
        record_fault(&mut stats, FaultEvent { fault_id: 6, kind: FaultKind::Hang }, 100);
        assert_eq!((stats.crashes(), stats.hangs()), (2, 1));
    }

    #[test]
    fn stop_examples() {
        let config = CampaignConfig::new(Strategy::CoverageOnly, 0);
        let mut stats = CampaignStats::new(Strategy::CoverageOnly, 0, 10);
        stats.final_coverage_ratio = 1.0;
        assert!(stop_condition(&stats, &config));
        stats.final_coverage_ratio = 0.89;
        stats.commands_executed = config.budget_commands;
        assert!(stop_condition(&stats, &config));
        stats.final_coverage_ratio = 0.5;
        stats.commands_executed = 10;
        assert!(!stop_condition(&stats, &config));
        stats.wall_time = config.budget_time;
        assert!(stop_condition(&stats, &config));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = CampaignConfig::new(Strategy::Random, 0);
        c.budget_commands = 0;
        assert_eq!(run_campaign(&c).unwrap_err(), CampaignError::ZeroBudget);
        let mut c = CampaignConfig::new(Strategy::Random, 0);
        c.seq_limit = 0;
        assert_eq!(run_campaign(&c).unwrap_err(), CampaignError::SeqLimit(0));
        let mut c = CampaignConfig::new(Strategy::Random, 0);
        c.enabled = OpcodeSet::empty();
        assert_eq!(run_campaign(&c).unwrap_err(), CampaignError::NoOpcodes);
        let mut c = CampaignConfig::new(Strategy::Random, 0);
        c.device.logical_pages = c.device.total_pages() as u32;
        assert!(matches!(run_campaign(&c), Err(CampaignError::Device(_))));
    }

    #[test]
    fn budgets_and_series_hold() {
        for strategy in Strategy::ALL {
            let out = run_campaign(&quick(strategy, 3)).unwrap();
            let s = &out.stats;
            assert_eq!(s.commands_executed, 20_000);
            assert!(s.crash_records.len() + s.hang_records.len() <= 10);
            let mut last = 0.0;
            for e in &s.events {
                assert!(e.coverage_ratio >= last);
                last = e.coverage_ratio;
            }
            assert_eq!(s.events.last().unwrap().cmd_index, 20_000);
            assert_eq!(s.commands_to_full_coverage.is_some(), s.final_coverage_ratio == 1.0);
            if strategy != Strategy::StateAware {
                assert_eq!(s.replays, 0);
                assert!(out.pool.is_empty());
            }
            if strategy == Strategy::Random {
                assert!(out.corpus.is_empty());
            }
        }
    }

    #[test]
    fn full_coverage_stops_the_run() {
        let mut c = CampaignConfig::new(Strategy::StateAware, 1);
        c.budget_commands = 2_000_000;
        let s = run_campaign(&c).unwrap().stats;
        assert_eq!(s.final_coverage_ratio, 1.0);
        assert_eq!(s.commands_to_full_coverage, Some(s.commands_executed));
    }

    #[test]
    fn runs_are_deterministic() {
        for strategy in Strategy::ALL {
            let a = run_campaign(&quick(strategy, 9)).unwrap();
            let b = run_campaign(&quick(strategy, 9)).unwrap();
            let strip = |mut s: CampaignStats| {
                s.wall_time = Duration::ZERO;
                s
            };
            assert_eq!(strip(a.stats), strip(b.stats));
            assert_eq!(a.corpus, b.corpus);
            assert_eq!(a.pool, b.pool);
        }
    }

    #[test]
    fn zero_reuse_matches_coverage_only() {
        let mut state = quick(Strategy::StateAware, 5);
        state.engine.p_reuse = 0.0;
        let a = run_campaign(&state).unwrap();
        let b = run_campaign(&quick(Strategy::CoverageOnly, 5)).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.stats.commands_to_full_coverage, b.stats.commands_to_full_coverage);
        assert_eq!(a.stats.events, b.stats.events);
        assert_eq!(a.stats.replays, 0);
    }

    #[test]
    fn gc_rows_carry_the_trigger_state() {
        let c = quick(Strategy::StateAware, 2);
        let out = run_campaign(&c).unwrap();
        assert!(out.stats.first_gc_trigger.is_some(), "no GC within budget");
        let threshold = u64::from(c.device.gc_victim_threshold);
        assert!(out.stats.events.iter().any(|e| e.victim_line_count == threshold));
    }

    #[test]
    fn faults_are_found() {
        let mut c = quick(Strategy::CoverageOnly, 1);
        c.faults = parse_fault_set("1 | crash | write | nlb >= 1\n2 | hang | read | nlb >= 1").unwrap();
        let s = run_campaign(&c).unwrap().stats;
        assert_eq!(s.crash_records.len(), 1);
        assert_eq!(s.hang_records.len(), 1);
        assert_eq!(s.crash_records[0].first_cmd_ordinal, 1);
    }
}
