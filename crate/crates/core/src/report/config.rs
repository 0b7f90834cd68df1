//! Flat `key = value` campaign configuration files.
//!
//! ```text
//! # device geometry
//! device.num_lines = 64
//! device.gc_victim_threshold = 24
//! engine.p_reuse = 0.6
//! engine.delta.total_invalid_pages = 32
//! campaign.ops = write,read,flush
//! campaign.faults = none
//! campaign.fault = 1 | crash | write | nlb >= 15
//! ```
//!
//! Keys are applied over whatever configuration the caller starts from.
//! Device keys are applied first and reset the change thresholds to the new
//! geometry's defaults before any `engine.delta.*` key is applied.
//! `campaign.fault` may repeat; every other key appears at most once.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::campaign::CampaignConfig;
use crate::engine::{ChangeThresholds, Variable};
use crate::ssd::{fault_set_preset, parse_fault_set, render_fault_set, OpcodeSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigFileError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

const DEVICE_KEYS: [&str; 10] = [
    "num_lines",
    "blocks_per_line",
    "pages_per_block",
    "logical_pages",
    "gc_victim_threshold",
    "wl_erase_gap_threshold",
    "write_buffer_pages",
    "max_nlb",
    "noise_enabled",
    "noise_seed",
];

const ENGINE_KEYS: [&str; 8] = [
    "epsilon",
    "alpha",
    "beta",
    "w_min",
    "retention_attempts",
    "p_reuse",
    "light_mutation",
    "pool_capacity",
];

const CAMPAIGN_KEYS: [&str; 10] = [
    "strategy",
    "seed",
    "ops",
    "seq_limit",
    "budget_commands",
    "budget_seconds",
    "stop_on_full_coverage",
    "sample_interval",
    "faults",
    "fault",
];

fn known(key: &str) -> bool {
    let Some((section, name)) = key.split_once('.') else {
        return false;
    };
    match section {
        "device" => DEVICE_KEYS.contains(&name),
        "engine" => {
            ENGINE_KEYS.contains(&name)
                || name
                    .strip_prefix("delta.")
                    .is_some_and(|v| Variable::ALL.iter().any(|var| var.name() == v))
        }
        "campaign" => CAMPAIGN_KEYS.contains(&name),
        _ => false,
    }
}

/// Splits a config file into entries, rejecting unknown and repeated keys.
pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>, ConfigFileError> {
    let mut entries: Vec<ConfigEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigFileError {
            line,
            message: "expected `key = value`".to_string(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !known(key) {
            return Err(ConfigFileError {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if key != "campaign.fault" && entries.iter().any(|e| e.key == key) {
            return Err(ConfigFileError {
                line,
                message: format!("key `{key}` given twice"),
            });
        }
        entries.push(ConfigEntry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(entries)
}

fn value<T: FromStr>(e: &ConfigEntry) -> Result<T, ConfigFileError> {
    e.value.parse().map_err(|_| ConfigFileError {
        line: e.line,
        message: format!("bad value `{}` for `{}`", e.value, e.key),
    })
}

fn flag(e: &ConfigEntry) -> Result<bool, ConfigFileError> {
    match e.value.as_str() {
        "true" | "on" => Ok(true),
        "false" | "off" => Ok(false),
        _ => Err(ConfigFileError {
            line: e.line,
            message: format!("expected true/false/on/off for `{}`", e.key),
        }),
    }
}

/// Applies parsed entries to `config`. Value ranges are left to
/// [`CampaignConfig::validate`].
pub fn apply_config(entries: &[ConfigEntry], config: &mut CampaignConfig) -> Result<(), ConfigFileError> {
    let section = |prefix: &'static str| {
        entries
            .iter()
            .filter_map(move |e| e.key.strip_prefix(prefix).map(|name| (name, e)))
    };

    let d = &mut config.device;
    let mut geometry_changed = false;
    for (name, e) in section("device.") {
        geometry_changed = true;
        match name {
            "num_lines" => d.num_lines = value(e)?,
            "blocks_per_line" => d.blocks_per_line = value(e)?,
            "pages_per_block" => d.pages_per_block = value(e)?,
            "logical_pages" => d.logical_pages = value(e)?,
            "gc_victim_threshold" => d.gc_victim_threshold = value(e)?,
            "wl_erase_gap_threshold" => d.wl_erase_gap_threshold = value(e)?,
            "write_buffer_pages" => d.write_buffer_pages = value(e)?,
            "max_nlb" => d.max_nlb = value(e)?,
            "noise_enabled" => d.noise_enabled = flag(e)?,
            "noise_seed" => d.noise_seed = value(e)?,
            _ => unreachable!("keys are checked by parse_config"),
        }
    }
    if geometry_changed {
        config.engine.thresholds = ChangeThresholds::for_device(&config.device);
    }

    let g = &mut config.engine;
    for (name, e) in section("engine.") {
        match name {
            "epsilon" => g.epsilon = value(e)?,
            "alpha" => g.alpha = value(e)?,
            "beta" => g.beta = value(e)?,
            "w_min" => g.w_min = value(e)?,
            "retention_attempts" => g.retention_attempts = value(e)?,
            "p_reuse" => g.p_reuse = value(e)?,
            "light_mutation" => g.light_mutation = value(e)?,
            "pool_capacity" => g.pool_capacity = value(e)?,
            delta => {
                let var = delta
                    .strip_prefix("delta.")
                    .and_then(|v| Variable::ALL.into_iter().find(|var| var.name() == v))
                    .expect("keys are checked by parse_config");
                g.thresholds.set(var, value(e)?);
            }
        }
    }

    let mut extra_faults = Vec::new();
    for (name, e) in section("campaign.") {
        let err = |message: String| ConfigFileError { line: e.line, message };
        match name {
            "strategy" => config.strategy = e.value.parse().map_err(|x| err(format!("{x}")))?,
            "seed" => config.rng_seed = value(e)?,
            "ops" => config.enabled = OpcodeSet::parse_list(&e.value).map_err(|x| err(format!("{x}")))?,
            "seq_limit" => config.seq_limit = value(e)?,
            "budget_commands" => config.budget_commands = value(e)?,
            "budget_seconds" => config.budget_time = Duration::from_secs(value(e)?),
            "stop_on_full_coverage" => config.stop_on_full_coverage = flag(e)?,
            "sample_interval" => config.sample_interval = value(e)?,
            "faults" => config.faults = fault_set_preset(&e.value).map_err(|x| err(format!("{x}")))?,
            "fault" => extra_faults.push(e),
            _ => unreachable!("keys are checked by parse_config"),
        }
    }
    for e in extra_faults {
        let mut parsed = parse_fault_set(&e.value).map_err(|x| ConfigFileError {
            line: e.line,
            message: format!("{x}"),
        })?;
        if parsed.len() != 1 {
            return Err(ConfigFileError {
                line: e.line,
                message: "expected exactly one fault".to_string(),
            });
        }
        let fault = parsed.remove(0);
        if config.faults.iter().any(|f| f.fault_id == fault.fault_id) {
            return Err(ConfigFileError {
                line: e.line,
                message: format!("fault id {} already defined", fault.fault_id),
            });
        }
        config.faults.push(fault);
    }
    Ok(())
}

/// Renders a config file that reproduces `config` when applied to any
/// starting configuration.
pub fn render_config(config: &CampaignConfig) -> String {
    let mut out = String::new();
    let d = &config.device;
    let device: [(&str, String); 10] = [
        ("num_lines", d.num_lines.to_string()),
        ("blocks_per_line", d.blocks_per_line.to_string()),
        ("pages_per_block", d.pages_per_block.to_string()),
        ("logical_pages", d.logical_pages.to_string()),
        ("gc_victim_threshold", d.gc_victim_threshold.to_string()),
        ("wl_erase_gap_threshold", d.wl_erase_gap_threshold.to_string()),
        ("write_buffer_pages", d.write_buffer_pages.to_string()),
        ("max_nlb", d.max_nlb.to_string()),
        ("noise_enabled", d.noise_enabled.to_string()),
        ("noise_seed", d.noise_seed.to_string()),
    ];
    for (k, v) in device {
        let _ = writeln!(out, "device.{k} = {v}");
    }
    let g = &config.engine;
    let engine: [(&str, String); 8] = [
        ("epsilon", format!("{:?}", g.epsilon)),
        ("alpha", format!("{:?}", g.alpha)),
        ("beta", format!("{:?}", g.beta)),
        ("w_min", format!("{:?}", g.w_min)),
        ("retention_attempts", g.retention_attempts.to_string()),
        ("p_reuse", format!("{:?}", g.p_reuse)),
        ("light_mutation", format!("{:?}", g.light_mutation)),
        ("pool_capacity", g.pool_capacity.to_string()),
    ];
    for (k, v) in engine {
        let _ = writeln!(out, "engine.{k} = {v}");
    }
    for var in Variable::ALL {
        let _ = writeln!(out, "engine.delta.{} = {}", var.name(), g.thresholds.get(var));
    }
    let campaign: [(&str, String); 8] = [
        ("strategy", config.strategy.to_string()),
        ("seed", config.rng_seed.to_string()),
        ("ops", config.enabled.to_string()),
        ("seq_limit", config.seq_limit.to_string()),
        ("budget_commands", config.budget_commands.to_string()),
        ("budget_seconds", config.budget_time.as_secs().to_string()),
        ("stop_on_full_coverage", config.stop_on_full_coverage.to_string()),
        ("sample_interval", config.sample_interval.to_string()),
    ];
    for (k, v) in campaign {
        let _ = writeln!(out, "campaign.{k} = {v}");
    }
    let preset = ["desk-scale", "paper-scale", "none"]
        .into_iter()
        .find(|p| fault_set_preset(p).is_ok_and(|set| set == config.faults));
    match preset {
        Some(p) => {
            let _ = writeln!(out, "campaign.faults = {p}");
        }
        None => {
            let _ = writeln!(out, "campaign.faults = none");
            for line in render_fault_set(&config.faults).lines() {
                let line = line.trim();
                if !line.is_empty() && !line.starts_with('#') {
                    let _ = writeln!(out, "campaign.fault = {line}");
                }
            }
        }
    }
    out
}
