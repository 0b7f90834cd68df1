use super::*;
use crate::campaign::{run_campaign, Strategy};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;

fn summary(strategy: Strategy, seed: u64, commands: u64) -> SummaryRow {
    SummaryRow {
        strategy,
        seed,
        commands_executed: commands,
        commands_to_full_coverage: Some(commands),
        wall_seconds: 1.5,
        crashes: 3,
        hangs: 1,
        final_coverage_ratio: 1.0,
    }
}

#[test]
fn summary_layout() {
    let mut row = summary(Strategy::StateAware, 1, 4200);
    row.commands_to_full_coverage = None;
    row.final_coverage_ratio = 0.85;
    let text = render_summary(&[row.clone()]);
    assert_eq!(
        text,
        "strategy,seed,commands_executed,commands_to_full_coverage,wall_seconds,crashes,hangs,final_coverage_ratio\n\
         state-aware,1,4200,,1.500,3,1,0.850000\n"
    );
    assert_eq!(parse_summary(&text).unwrap(), vec![row]);
}

#[test]
fn strict_reader_rejects_malformed_csv() {
    let good = render_summary(&[summary(Strategy::Random, 2, 10)]);
    assert!(parse_summary(&good.replace("strategy,", "strat,")).is_err());
    assert!(parse_summary(&good.replace(",1.000000", "")).is_err());
    assert!(parse_summary(&format!("{good}random,3,4\n")).is_err());
    assert!(parse_summary(&good.replace("random", "bogus")).is_err());
    assert!(parse_summary(&good.replace("1.000000", "1.5")).is_err());
    assert!(parse_summary("").is_err());
    assert!(parse_events("cmd_index\n1\n").is_err());
}

#[test]
fn reduction_matches_published_average() {
    let r = reduction(7_663_816.0, 23_440_462.0);
    assert!((r - 0.673).abs() < 5e-4, "{r}");
}

#[test]
fn compare_table_shape() {
    let mut runs = Vec::new();
    for seed in 1..=5 {
        runs.push(summary(Strategy::StateAware, seed, 7_663_816));
        runs.push(summary(Strategy::CoverageOnly, seed, 23_440_462));
    }
    let table = compare_table(&runs);
    let mut reader = csv::ReaderBuilder::new().from_reader(table.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let kind = |k: &str| rows.iter().filter(|r| &r[0] == k).count();
    assert_eq!((kind("run"), kind("average"), kind("reduction")), (10, 2, 1));
    let red = rows.iter().find(|r| &r[0] == "reduction").unwrap();
    assert_eq!(&red[1], "state-aware/coverage");
    assert_eq!(&red[3], "67.3%");
    assert_eq!(&red[5], "0.0%");
}

#[test]
fn three_strategies_give_three_reductions() {
    let runs: Vec<_> = Strategy::ALL
        .into_iter()
        .enumerate()
        .map(|(i, s)| summary(s, 1, 100 * (3 - i as u64)))
        .collect();
    let table = compare_table(&runs);
    assert_eq!(table.lines().filter(|l| l.starts_with("reduction")).count(), 3);
    assert!(table.contains("reduction,state-aware/random,,66.7%"));
    assert!(table.contains("reduction,coverage/random,,33.3%"));
}

#[test]
fn fig3_quartiles() {
    let adm = |id: u64, write: u32, read: u32| AdmissionRow {
        record_id: id,
        cmd_index: id * 10,
        histogram: [write, read, 0, 0, 0, 0],
    };
    assert!(fig3_rows(&[]).is_empty());
    let rows: Vec<_> = (1..=5).map(|i| adm(i, i as u32, 1)).collect();
    let fig = fig3_rows(&rows);
    // five admissions: quarter rounds up to two
    assert_eq!(fig[0].histogram[..2], [3, 2]);
    assert_eq!(fig[1].histogram[..2], [9, 2]);
    assert!((fig[1].write_flush_share() - 9.0 / 11.0).abs() < 1e-12);
}

#[test]
fn corpus_names_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = vec![crate::codec::initial_seed(), Genome::from(vec![7u8; 16])];
    write_corpus(dir.path(), &corpus).unwrap();
    let name = corpus_file_name(0, &corpus[0]);
    assert!(name.starts_with("000000-") && name.len() == 23);
    assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
    std::fs::write(dir.path().join(&name), b"tampered").unwrap();
    assert!(load_corpus(dir.path()).is_err());
}

#[test]
fn run_dir_round_trip_and_plot_data() {
    let mut config = CampaignConfig::new(Strategy::StateAware, 3);
    config.budget_commands = 3000;
    config.sample_interval = 500;
    let outcome = run_campaign(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_dir(dir.path(), &config, &outcome, true).unwrap();

    let rows = read_run_summary(dir.path()).unwrap();
    assert_eq!(rows, vec![SummaryRow::from_stats(&outcome.stats, true)]);
    let events = parse_events(&read_file(dir.path(), EVENTS_CSV).unwrap()).unwrap();
    assert_eq!(events.len(), outcome.stats.events.len());
    let crashes = parse_crashes(&read_file(dir.path(), CRASHES_CSV).unwrap()).unwrap();
    assert_eq!(crashes.len(), outcome.stats.faults_found());
    let admissions = parse_admissions(&read_file(dir.path(), ADMISSIONS_CSV).unwrap()).unwrap();
    assert_eq!(admissions, outcome.stats.admissions);
    let pool = crate::engine::parse_ontology(&read_file(dir.path(), POOL_ONTOLOGY).unwrap()).unwrap();
    assert_eq!(pool.len(), outcome.pool.len());
    assert_eq!(load_corpus(&dir.path().join(CORPUS_DIR)).unwrap(), outcome.corpus);

    write_plot_data(dir.path()).unwrap();
    let fig2 = read_file(dir.path(), "fig2.csv").unwrap();
    assert_eq!(fig2.lines().count(), events.len() + 1);
    assert!(fig2.lines().skip(1).all(|l| l.ends_with(",12")));
    if outcome.stats.first_gc_trigger.is_some() {
        assert!(fig2.lines().any(|l| l.starts_with(|c: char| c.is_ascii_digit()) && l.ends_with(",12,12")));
    }
}

#[test]
fn plot_data_needs_events() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(write_plot_data(dir.path()), Err(ReportError::Io { .. })));
}

fn event_row() -> impl proptest::strategy::Strategy<Value = EventRow> {
    (any::<u32>(), 0usize..64, 0u32..=1_000_000, any::<[u32; 5]>()).prop_map(|(i, b, r, s)| EventRow {
        cmd_index: u64::from(i),
        coverage_blocks: b,
        coverage_ratio: f64::from(r) / 1_000_000.0,
        victim_line_count: u64::from(s[0]),
        free_line_count: u64::from(s[1]),
        total_invalid_pages: u64::from(s[2]),
        max_erase_count: u64::from(s[3]),
        gc_invocations: u64::from(s[4]),
    })
}

proptest! {
    #[test]
    fn events_round_trip(rows in prop::collection::vec(event_row(), 0..20)) {
        let parsed = parse_events(&render_events(&rows)).unwrap();
        prop_assert_eq!(parsed, rows);
    }

    #[test]
    fn admissions_round_trip(raw in prop::collection::vec((any::<u64>(), any::<u64>(), any::<[u32; 6]>()), 0..20)) {
        let rows: Vec<_> = raw
            .into_iter()
            .map(|(record_id, cmd_index, histogram)| AdmissionRow { record_id, cmd_index, histogram })
            .collect();
        prop_assert_eq!(parse_admissions(&render_admissions(&rows)).unwrap(), rows);
    }

    #[test]
    fn summary_parser_is_total(text in ".{0,200}") {
        let _ = parse_summary(&text);
        let _ = parse_events(&text);
        let _ = parse_crashes(&text);
    }
}
