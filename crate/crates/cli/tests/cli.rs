use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fuzzssd::report::{parse_events, read_run_summary};

fn fuzzssd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuzzssd"))
        .args(args)
        .env_remove("FUZZSSD_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn run_small(dir: &Path, strategy: &str, seed: &str) -> Output {
    fuzzssd(&[
        "run",
        "--strategy",
        strategy,
        "--seed",
        seed,
        "--budget-cmds",
        "4000",
        "--reproducible",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn run_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let r1 = tmp.path().join("r1");
    let out = fuzzssd(&[
        "run", "--strategy", "state-aware", "--preset", "desk-scale", "--seed", "1", "--ops", "write,read",
        "--out", r1.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_run_summary(&r1).unwrap().len(), 1);
    for name in ["events.csv", "crashes.csv", "summary.csv", "pool.ontology", "admissions.csv", "run.conf"] {
        assert!(r1.join(name).is_file(), "{name}");
    }
    assert!(fs::read_dir(r1.join("corpus")).unwrap().count() >= 1);
}

#[test]
fn six_opcode_campaign_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fuzzssd(&[
        "run", "--strategy", "coverage", "--ops", "write,read,compare,flush,write-zeroes,write-uncorrectable",
        "--budget-cmds", "2000", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let conf = fs::read_to_string(tmp.path().join("run.conf")).unwrap();
    assert!(conf.contains("campaign.ops = write,read,compare,flush,write-zeroes,write-uncorrectable"));
}

#[test]
fn bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&fuzzssd(&["run", "--strategy", "bogus", "--out", dir])), 2);
    assert_eq!(code(&fuzzssd(&["run", "--no-such-flag"])), 2);
    assert_eq!(code(&fuzzssd(&["run", "--ops", "write,erase", "--out", dir])), 2);
    assert_eq!(code(&fuzzssd(&["run", "--preset", "huge", "--out", dir])), 2);
    assert_eq!(code(&fuzzssd(&["run", "--budget-cmds", "0", "--out", dir])), 2);
    assert_eq!(code(&fuzzssd(&["run", "--noise", "maybe", "--out", dir])), 2);
}

#[test]
fn unwritable_out_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let out = run_small(&file.join("run"), "random", "1");
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_overrides_preset_and_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("c.conf");
    fs::write(&conf, "device.gc_victim_threshold = 10\ncampaign.seq_limit = 20\ncampaign.seed = 9\n").unwrap();
    let out_dir = tmp.path().join("r");
    let out = fuzzssd(&[
        "run", "--config", conf.to_str().unwrap(), "--seq-limit", "30", "--budget-cmds", "1000",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let written = fs::read_to_string(out_dir.join("run.conf")).unwrap();
    assert!(written.contains("device.gc_victim_threshold = 10"));
    assert!(written.contains("campaign.seq_limit = 30"));
    assert!(written.contains("campaign.seed = 9"));

    fs::write(&conf, "device.colour = blue\n").unwrap();
    let out = fuzzssd(&["run", "--config", conf.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn default_output_root_comes_from_env() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fuzzssd"))
        .args(["run", "--strategy", "random", "--seed", "4", "--budget-cmds", "500"])
        .env("FUZZSSD_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("random-4").join("summary.csv").is_file());
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run_small(&a, "state-aware", "5")), 0);
    assert_eq!(code(&run_small(&b, "state-aware", "5")), 0);
    for name in ["summary.csv", "events.csv", "crashes.csv", "pool.ontology", "admissions.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn compare_tables_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["coverage", "state-aware"]
        .iter()
        .flat_map(|s| (1..=2).map(move |seed| (s.to_string(), seed)))
        .map(|(s, seed)| {
            let dir = tmp.path().join(format!("{s}-{seed}"));
            assert_eq!(code(&run_small(&dir, &s, &seed.to_string())), 0);
            dir.to_str().unwrap().to_string()
        })
        .collect();
    let mut args = vec!["compare"];
    args.extend(dirs.iter().map(String::as_str));
    let out = fuzzssd(&args);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8(out.stdout).unwrap();
    let count = |prefix: &str| table.lines().filter(|l| l.starts_with(prefix)).count();
    assert_eq!((count("run,"), count("average,"), count("reduction,")), (4, 2, 1));

    assert_eq!(code(&fuzzssd(&["compare", &dirs[0]])), 2);
    let missing = tmp.path().join("nothing-here");
    let out = fuzzssd(&["compare", &dirs[0], missing.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("summary.csv"));
    fs::write(Path::new(&dirs[1]).join("summary.csv"), "strategy,seed\nx,1\n").unwrap();
    let out = fuzzssd(&["compare", &dirs[0], &dirs[1]]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("summary.csv"));
}

#[test]
fn run_matrix_writes_runs_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fuzzssd(&[
        "compare", "--run-matrix", "--strategies", "random,coverage", "--seeds", "2", "--budget-cmds", "1500",
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for run in ["random-1", "random-2", "coverage-1", "coverage-2"] {
        assert!(tmp.path().join(run).join("summary.csv").is_file(), "{run}");
    }
    let table = fs::read_to_string(tmp.path().join("compare.csv")).unwrap();
    assert!(table.contains("reduction,coverage/random,"));
}

#[test]
fn plot_data_from_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("r");
    assert_eq!(code(&run_small(&run, "state-aware", "2")), 0);
    assert_eq!(code(&fuzzssd(&["plot-data", run.to_str().unwrap()])), 0);
    let events = parse_events(&fs::read_to_string(run.join("events.csv")).unwrap()).unwrap();
    let fig2 = fs::read_to_string(run.join("fig2.csv")).unwrap();
    assert_eq!(fig2.lines().next(), Some("cmd_index,victim_line_count,threshold"));
    assert_eq!(fig2.lines().count(), events.len() + 1);
    assert!(fig2.lines().any(|l| l.ends_with(",12,12")), "a GC-start row sits at the threshold");
    let fig3 = fs::read_to_string(run.join("fig3.csv")).unwrap();
    assert!(fig3.starts_with("quartile,write,read,compare,flush,write_zeroes,write_uncorrectable,write_flush_share\n"));

    let random = tmp.path().join("random");
    assert_eq!(code(&run_small(&random, "random", "2")), 0);
    assert_eq!(code(&fuzzssd(&["plot-data", random.to_str().unwrap()])), 0);
    assert_eq!(fs::read_to_string(random.join("fig3.csv")).unwrap().lines().count(), 1);

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&fuzzssd(&["plot-data", empty.to_str().unwrap()])), 2);
}
