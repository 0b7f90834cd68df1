//! Cross-run comparison table and figure data.

use std::path::Path;

use super::{
    apply_config, parse_admissions, parse_config, parse_events, read_file, write_csv, write_file,
    ReportError, SummaryRow, ADMISSIONS_CSV, EVENTS_CSV, RUN_CONF,
};
use crate::campaign::{AdmissionRow, CampaignConfig, EventRow, Strategy};
use crate::ssd::Opcode;

pub const COMPARE_HEADER: [&str; 9] = [
    "row",
    "strategy",
    "seed",
    "commands_executed",
    "commands_to_full_coverage",
    "wall_seconds",
    "crashes",
    "hangs",
    "final_coverage_ratio",
];

pub const FIG2_HEADER: [&str; 3] = ["cmd_index", "victim_line_count", "threshold"];

pub const FIG3_HEADER: [&str; 8] = [
    "quartile",
    "write",
    "read",
    "compare",
    "flush",
    "write_zeroes",
    "write_uncorrectable",
    "write_flush_share",
];

/// Fractional reduction of `value` relative to `baseline`.
pub fn reduction(value: f64, baseline: f64) -> f64 {
    1.0 - value / baseline
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

struct Averages {
    commands: f64,
    wall: f64,
}

/// Builds the comparison CSV: one row per run, one average row per
/// strategy, and one reduction row per strategy pair (later strategy in
/// `random, coverage, state-aware` order against the earlier one).
pub fn compare_table(runs: &[SummaryRow]) -> String {
    let mut rows: Vec<[String; 9]> = Vec::new();
    let mut sorted = runs.to_vec();
    sorted.sort_by_key(|r| (Strategy::ALL.iter().position(|s| *s == r.strategy), r.seed));
    for r in &sorted {
        let f = r.fields();
        rows.push([
            "run".to_string(),
            f[0].clone(),
            f[1].clone(),
            f[2].clone(),
            f[3].clone(),
            f[4].clone(),
            f[5].clone(),
            f[6].clone(),
            f[7].clone(),
        ]);
    }

    let mut averages: Vec<(Strategy, Averages)> = Vec::new();
    for strategy in Strategy::ALL {
        let of = || sorted.iter().filter(move |r| r.strategy == strategy);
        let Some(commands) = mean(of().map(|r| r.commands_executed as f64)) else {
            continue;
        };
        let wall = mean(of().map(|r| r.wall_seconds)).unwrap_or_default();
        let full = mean(of().filter_map(|r| r.commands_to_full_coverage.map(|c| c as f64)));
        rows.push([
            "average".to_string(),
            strategy.to_string(),
            String::new(),
            format!("{commands:.1}"),
            full.map(|v| format!("{v:.1}")).unwrap_or_default(),
            format!("{wall:.3}"),
            format!("{:.1}", mean(of().map(|r| r.crashes as f64)).unwrap_or_default()),
            format!("{:.1}", mean(of().map(|r| r.hangs as f64)).unwrap_or_default()),
            format!("{:.6}", mean(of().map(|r| r.final_coverage_ratio)).unwrap_or_default()),
        ]);
        averages.push((strategy, Averages { commands, wall }));
    }

    let percent = |value: f64, baseline: f64| {
        if baseline > 0.0 {
            format!("{:.1}%", 100.0 * reduction(value, baseline))
        } else {
            String::new()
        }
    };
    for (i, (later, a)) in averages.iter().enumerate().rev() {
        for (earlier, b) in averages[..i].iter().rev() {
            rows.push([
                "reduction".to_string(),
                format!("{later}/{earlier}"),
                String::new(),
                percent(a.commands, b.commands),
                String::new(),
                percent(a.wall, b.wall),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
    }
    write_csv(COMPARE_HEADER, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fig2Row {
    pub cmd_index: u64,
    pub victim_line_count: u64,
    pub threshold: u32,
}

pub fn fig2_rows(events: &[EventRow], threshold: u32) -> Vec<Fig2Row> {
    events
        .iter()
        .map(|e| Fig2Row {
            cmd_index: e.cmd_index,
            victim_line_count: e.victim_line_count,
            threshold,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fig3Row {
    /// `early` or `late`.
    pub quartile: &'static str,
    pub histogram: [u64; 6],
}

impl Fig3Row {
    /// Write plus Flush commands as a fraction of all commands.
    pub fn write_flush_share(&self) -> f64 {
        let total: u64 = self.histogram.iter().sum();
        let wf = self.histogram[Opcode::Write.index()] + self.histogram[Opcode::Flush.index()];
        if total == 0 {
            0.0
        } else {
            wf as f64 / total as f64
        }
    }
}

/// Summed operation histograms of the first and last quarter of admissions
/// (rounded up), in admission order. Empty when nothing was admitted.
pub fn fig3_rows(admissions: &[AdmissionRow]) -> Vec<Fig3Row> {
    if admissions.is_empty() {
        return Vec::new();
    }
    let mut ordered = admissions.to_vec();
    ordered.sort_by_key(|a| (a.cmd_index, a.record_id));
    let q = ordered.len().div_ceil(4);
    let sum = |rows: &[AdmissionRow]| {
        let mut h = [0u64; 6];
        for r in rows {
            for (slot, n) in h.iter_mut().zip(r.histogram) {
                *slot += u64::from(n);
            }
        }
        h
    };
    vec![
        Fig3Row {
            quartile: "early",
            histogram: sum(&ordered[..q]),
        },
        Fig3Row {
            quartile: "late",
            histogram: sum(&ordered[ordered.len() - q..]),
        },
    ]
}

/// Writes `fig2.csv` and `fig3.csv` into a run directory. The GC threshold
/// comes from `run.conf` when present, else from the desk-scale preset.
pub fn write_plot_data(dir: &Path) -> Result<(), ReportError> {
    let events = parse_events(&read_file(dir, EVENTS_CSV)?)?;
    let mut config = CampaignConfig::new(Strategy::StateAware, 0);
    if dir.join(RUN_CONF).exists() {
        let text = read_file(dir, RUN_CONF)?;
        let entries = parse_config(&text).map_err(|source| ReportError::Config {
            file: RUN_CONF.to_string(),
            source,
        })?;
        apply_config(&entries, &mut config).map_err(|source| ReportError::Config {
            file: RUN_CONF.to_string(),
            source,
        })?;
    }
    let admissions = if dir.join(ADMISSIONS_CSV).exists() {
        parse_admissions(&read_file(dir, ADMISSIONS_CSV)?)?
    } else {
        Vec::new()
    };

    let fig2 = fig2_rows(&events, config.device.gc_victim_threshold);
    let fig2 = write_csv(
        FIG2_HEADER,
        fig2.iter().map(|r| {
            [
                r.cmd_index.to_string(),
                r.victim_line_count.to_string(),
                r.threshold.to_string(),
            ]
        }),
    );
    let fig3 = write_csv(
        FIG3_HEADER,
        fig3_rows(&admissions).iter().map(|r| {
            let h = r.histogram.map(|n| n.to_string());
            [
                r.quartile.to_string(),
                h[0].clone(),
                h[1].clone(),
                h[2].clone(),
                h[3].clone(),
                h[4].clone(),
                h[5].clone(),
                format!("{:.6}", r.write_flush_share()),
            ]
        }),
    );
    write_file(dir, "fig2.csv", &fig2)?;
    write_file(dir, "fig3.csv", &fig3)
}
