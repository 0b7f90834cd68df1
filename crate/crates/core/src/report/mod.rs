//! Run directories and the CSV files inside them.
//!
//! A finished campaign is written as:
//!
//! ```text
//! <dir>/summary.csv      one row per run
//! <dir>/events.csv       sampled coverage and device state
//! <dir>/crashes.csv      one row per distinct fault
//! <dir>/admissions.csv   operation histogram of every pool admission
//! <dir>/pool.ontology    final sequence pool
//! <dir>/run.conf         effective configuration
//! <dir>/corpus/          one file per corpus genome
//! ```

mod compare;
mod config;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::campaign::{
    AdmissionRow, CampaignConfig, CampaignOutcome, CampaignStats, CrashRecord, EventRow, Strategy,
};
use crate::codec::Genome;
use crate::engine::{render_ontology, OntologyError};
use crate::ssd::FaultKind;

pub use compare::{
    compare_table, fig2_rows, fig3_rows, reduction, write_plot_data, Fig2Row, Fig3Row,
};
pub use config::{apply_config, parse_config, render_config, ConfigEntry, ConfigFileError};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const CRASHES_CSV: &str = "crashes.csv";
pub const ADMISSIONS_CSV: &str = "admissions.csv";
pub const POOL_ONTOLOGY: &str = "pool.ontology";
pub const RUN_CONF: &str = "run.conf";
pub const CORPUS_DIR: &str = "corpus";

pub const SUMMARY_HEADER: [&str; 8] = [
    "strategy",
    "seed",
    "commands_executed",
    "commands_to_full_coverage",
    "wall_seconds",
    "crashes",
    "hangs",
    "final_coverage_ratio",
];

pub const EVENTS_HEADER: [&str; 8] = [
    "cmd_index",
    "coverage_blocks",
    "coverage_ratio",
    "victim_line_count",
    "free_line_count",
    "total_invalid_pages",
    "max_erase_count",
    "gc_invocations",
];

pub const CRASHES_HEADER: [&str; 4] = ["fault_id", "kind", "first_cmd_ordinal", "occurrence_count"];

pub const ADMISSIONS_HEADER: [&str; 8] = [
    "record_id",
    "cmd_index",
    "write",
    "read",
    "compare",
    "flush",
    "write_zeroes",
    "write_uncorrectable",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}: {message}")]
    Format { file: String, message: String },
    #[error("{file}: {source}")]
    Config {
        file: String,
        #[source]
        source: ConfigFileError,
    },
    #[error("{file}: {source}")]
    Ontology {
        file: String,
        #[source]
        source: OntologyError,
    },
}

impl ReportError {
    fn io(path: &Path, source: io::Error) -> Self {
        ReportError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(file: &str, message: impl Into<String>) -> Self {
        ReportError::Format {
            file: file.to_string(),
            message: message.into(),
        }
    }
}

/// One row of summary.csv.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub seed: u64,
    pub commands_executed: u64,
    pub commands_to_full_coverage: Option<u64>,
    pub wall_seconds: f64,
    pub crashes: u64,
    pub hangs: u64,
    pub final_coverage_ratio: f64,
}

impl SummaryRow {
    /// With `reproducible`, wall time is written as zero so reruns compare
    /// byte for byte.
    pub fn from_stats(stats: &CampaignStats, reproducible: bool) -> Self {
        Self {
            strategy: stats.strategy,
            seed: stats.seed,
            commands_executed: stats.commands_executed,
            commands_to_full_coverage: stats.commands_to_full_coverage,
            wall_seconds: if reproducible {
                0.0
            } else {
                stats.wall_time.as_secs_f64()
            },
            crashes: stats.crashes() as u64,
            hangs: stats.hangs() as u64,
            final_coverage_ratio: stats.final_coverage_ratio,
        }
    }

    fn fields(&self) -> [String; 8] {
        [
            self.strategy.to_string(),
            self.seed.to_string(),
            self.commands_executed.to_string(),
            self.commands_to_full_coverage
                .map(|c| c.to_string())
                .unwrap_or_default(),
            format!("{:.3}", self.wall_seconds),
            self.crashes.to_string(),
            self.hangs.to_string(),
            format!("{:.6}", self.final_coverage_ratio),
        ]
    }
}

fn write_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

/// Reads a CSV with exactly `header` as its first line and `N` fields per row.
fn read_csv<const N: usize>(file: &str, text: &str, header: [&str; N]) -> Result<Vec<csv::StringRecord>, ReportError> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(false)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let got = r
        .headers()
        .map_err(|e| ReportError::format(file, e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(ReportError::format(
            file,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| ReportError::format(file, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(file: &str, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, ReportError> {
    let raw = rec.get(i).unwrap_or_default();
    raw.parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        ReportError::format(file, format!("line {line}: bad {name} `{raw}`"))
    })
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    write_csv(SUMMARY_HEADER, rows.iter().map(SummaryRow::fields))
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, ReportError> {
    let f = SUMMARY_CSV;
    read_csv(f, text, SUMMARY_HEADER)?
        .iter()
        .map(|rec| {
            let full = rec.get(3).unwrap_or_default();
            let wall_seconds: f64 = field(f, rec, 4, "wall_seconds")?;
            let final_coverage_ratio: f64 = field(f, rec, 7, "final_coverage_ratio")?;
            if !wall_seconds.is_finite() || !(0.0..=1.0).contains(&final_coverage_ratio) {
                return Err(ReportError::format(f, "wall time or coverage ratio out of range"));
            }
            Ok(SummaryRow {
                strategy: field(f, rec, 0, "strategy")?,
                seed: field(f, rec, 1, "seed")?,
                commands_executed: field(f, rec, 2, "commands_executed")?,
                commands_to_full_coverage: if full.is_empty() {
                    None
                } else {
                    Some(field(f, rec, 3, "commands_to_full_coverage")?)
                },
                wall_seconds,
                crashes: field(f, rec, 5, "crashes")?,
                hangs: field(f, rec, 6, "hangs")?,
                final_coverage_ratio,
            })
        })
        .collect()
}

pub fn render_events(rows: &[EventRow]) -> String {
    write_csv(
        EVENTS_HEADER,
        rows.iter().map(|e| {
            [
                e.cmd_index.to_string(),
                e.coverage_blocks.to_string(),
                format!("{:.6}", e.coverage_ratio),
                e.victim_line_count.to_string(),
                e.free_line_count.to_string(),
                e.total_invalid_pages.to_string(),
                e.max_erase_count.to_string(),
                e.gc_invocations.to_string(),
            ]
        }),
    )
}

pub fn parse_events(text: &str) -> Result<Vec<EventRow>, ReportError> {
    let f = EVENTS_CSV;
    read_csv(f, text, EVENTS_HEADER)?
        .iter()
        .map(|rec| {
            let coverage_ratio: f64 = field(f, rec, 2, "coverage_ratio")?;
            if !(0.0..=1.0).contains(&coverage_ratio) {
                return Err(ReportError::format(f, "coverage ratio out of range"));
            }
            Ok(EventRow {
                cmd_index: field(f, rec, 0, "cmd_index")?,
                coverage_blocks: field(f, rec, 1, "coverage_blocks")?,
                coverage_ratio,
                victim_line_count: field(f, rec, 3, "victim_line_count")?,
                free_line_count: field(f, rec, 4, "free_line_count")?,
                total_invalid_pages: field(f, rec, 5, "total_invalid_pages")?,
                max_erase_count: field(f, rec, 6, "max_erase_count")?,
                gc_invocations: field(f, rec, 7, "gc_invocations")?,
            })
        })
        .collect()
}

pub fn render_crashes(records: &[CrashRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.first_cmd_ordinal, r.fault_id));
    write_csv(
        CRASHES_HEADER,
        sorted.iter().map(|r| {
            [
                r.fault_id.to_string(),
                r.kind.to_string(),
                r.first_cmd_ordinal.to_string(),
                r.occurrence_count.to_string(),
            ]
        }),
    )
}

pub fn parse_crashes(text: &str) -> Result<Vec<CrashRecord>, ReportError> {
    let f = CRASHES_CSV;
    read_csv(f, text, CRASHES_HEADER)?
        .iter()
        .map(|rec| {
            let kind = match rec.get(1).unwrap_or_default() {
                "crash" => FaultKind::Crash,
                "hang" => FaultKind::Hang,
                other => return Err(ReportError::format(f, format!("unknown fault kind `{other}`"))),
            };
            Ok(CrashRecord {
                fault_id: field(f, rec, 0, "fault_id")?,
                kind,
                first_cmd_ordinal: field(f, rec, 2, "first_cmd_ordinal")?,
                occurrence_count: field(f, rec, 3, "occurrence_count")?,
            })
        })
        .collect()
}

pub fn render_admissions(rows: &[AdmissionRow]) -> String {
    write_csv(
        ADMISSIONS_HEADER,
        rows.iter().map(|a| {
            let h = a.histogram.map(|n| n.to_string());
            [
                a.record_id.to_string(),
                a.cmd_index.to_string(),
                h[0].clone(),
                h[1].clone(),
                h[2].clone(),
                h[3].clone(),
                h[4].clone(),
                h[5].clone(),
            ]
        }),
    )
}

pub fn parse_admissions(text: &str) -> Result<Vec<AdmissionRow>, ReportError> {
    let f = ADMISSIONS_CSV;
    read_csv(f, text, ADMISSIONS_HEADER)?
        .iter()
        .map(|rec| {
            let mut histogram = [0u32; 6];
            for (i, slot) in histogram.iter_mut().enumerate() {
                *slot = field(f, rec, i + 2, ADMISSIONS_HEADER[i + 2])?;
            }
            Ok(AdmissionRow {
                record_id: field(f, rec, 0, "record_id")?,
                cmd_index: field(f, rec, 1, "cmd_index")?,
                histogram,
            })
        })
        .collect()
}

/// Corpus file name: six-digit ordinal and the first 16 hex digits of the
/// genome's SHA-256.
pub fn corpus_file_name(ordinal: usize, genome: &Genome) -> String {
    let digest = Sha256::digest(genome.as_bytes());
    format!("{ordinal:06}-{}", &hex::encode(digest)[..16])
}

pub fn write_corpus(dir: &Path, corpus: &[Genome]) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    for (i, genome) in corpus.iter().enumerate() {
        let path = dir.join(corpus_file_name(i, genome));
        fs::write(&path, genome.as_bytes()).map_err(|e| ReportError::io(&path, e))?;
    }
    Ok(())
}

/// Loads a corpus directory in ordinal order, checking each file's hash.
pub fn load_corpus(dir: &Path) -> Result<Vec<Genome>, ReportError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| ReportError::io(dir, e))? {
        let entry = entry.map_err(|e| ReportError::io(dir, e))?;
        names.push(entry.file_name().to_string_lossy().into_owned());
    }
    names.sort();
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let path = dir.join(name);
            let genome = Genome::from(fs::read(&path).map_err(|e| ReportError::io(&path, e))?);
            if *name != corpus_file_name(i, &genome) {
                return Err(ReportError::format(
                    name,
                    "file name does not match ordinal and content hash",
                ));
            }
            Ok(genome)
        })
        .collect()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| ReportError::io(&path, e))
}

fn read_file(dir: &Path, name: &str) -> Result<String, ReportError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| ReportError::io(&path, e))
}

/// Writes every artifact of a finished campaign into `dir`.
pub fn write_run_dir(
    dir: &Path,
    config: &CampaignConfig,
    outcome: &CampaignOutcome,
    reproducible: bool,
) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    let stats = &outcome.stats;
    let summary = SummaryRow::from_stats(stats, reproducible);
    write_file(dir, SUMMARY_CSV, &render_summary(&[summary]))?;
    write_file(dir, EVENTS_CSV, &render_events(&stats.events))?;
    let mut faults = stats.crash_records.clone();
    faults.extend_from_slice(&stats.hang_records);
    write_file(dir, CRASHES_CSV, &render_crashes(&faults))?;
    write_file(dir, ADMISSIONS_CSV, &render_admissions(&stats.admissions))?;
    write_file(dir, POOL_ONTOLOGY, &render_ontology(&outcome.pool))?;
    write_file(dir, RUN_CONF, &render_config(config))?;
    let corpus = dir.join(CORPUS_DIR);
    if corpus.exists() {
        fs::remove_dir_all(&corpus).map_err(|e| ReportError::io(&corpus, e))?;
    }
    write_corpus(&corpus, &outcome.corpus)
}

/// Reads the single summary row of a run directory.
pub fn read_run_summary(dir: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    let text = read_file(dir, SUMMARY_CSV)?;
    let rows = parse_summary(&text).map_err(|e| match e {
        ReportError::Format { message, .. } => ReportError::format(
            &dir.join(SUMMARY_CSV).display().to_string(),
            message,
        ),
        other => other,
    })?;
    if rows.is_empty() {
        return Err(ReportError::format(
            &dir.join(SUMMARY_CSV).display().to_string(),
            "no rows",
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
