//! Plain-text export of the sequence pool.
//!
//! ```text
//! Pool: (capacity=256, next_id=3)
//!
//! ID: (1)
//! Name: (Successful Test Sequence 1)
//! Precondition: (Cold, Cold, Warm, Hot, Cold, Cold, Cold, Cold, Cold, Cold)
//! Input: (Hot=1, Warm=0, Cold=1)
//! Operation: (Write=1, Read=1)
//! Expectation: (Success=2, Fail=0)
//! Weight: (4.761904761904762)
//! Replays: (0)
//! Genome: (0000000000000100...)
//! Outcome: (SS)
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    nonzero_operations, Category, InputSummary, PreconditionVector, SequenceRecord,
    SuccessPool,
};
use crate::codec::{Genome, RECORD_LEN};
use crate::ssd::{Opcode, SEGMENTS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct OntologyError {
    pub line: usize,
    pub message: String,
}

pub fn render_ontology(pool: &SuccessPool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Pool: (capacity={}, next_id={})",
        pool.capacity(),
        pool.next_id()
    );
    for r in pool.records() {
        out.push('\n');
        let pre: Vec<&str> = r.precondition.0.iter().map(|c| c.name()).collect();
        let ops: Vec<String> = nonzero_operations(&r.operation_histogram)
            .map(|(op, n)| format!("{}={n}", op.label()))
            .collect();
        let (ok, fail) = r.expectation();
        let outcome: String = r.outcomes.iter().map(|s| if *s { 'S' } else { 'F' }).collect();
        let _ = writeln!(out, "ID: ({})", r.id);
        let _ = writeln!(out, "Name: ({})", r.name);
        let _ = writeln!(out, "Precondition: ({})", pre.join(", "));
        let s = r.input_summary;
        let _ = writeln!(out, "Input: (Hot={}, Warm={}, Cold={})", s.hot, s.warm, s.cold);
        let _ = writeln!(out, "Operation: ({})", ops.join(", "));
        let _ = writeln!(out, "Expectation: (Success={ok}, Fail={fail})");
        let _ = writeln!(out, "Weight: ({:?})", r.weight);
        let _ = writeln!(out, "Replays: ({})", r.replay_attempts);
        let _ = writeln!(out, "Genome: ({})", hex::encode(&*r.genome));
        let _ = writeln!(out, "Outcome: ({outcome})");
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn err(line: usize, message: impl Into<String>) -> OntologyError {
        OntologyError {
            line,
            message: message.into(),
        }
    }

    fn skip_blank(&mut self) {
        while self
            .inner
            .peek()
            .is_some_and(|(_, l)| l.trim().is_empty())
        {
            self.inner.next();
        }
    }

    /// Next `Key: (value)` line, returning its 1-based number and the value.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), OntologyError> {
        let (idx, raw) = self
            .inner
            .next()
            .ok_or_else(|| Self::err(0, format!("missing `{key}` line")))?;
        let n = idx + 1;
        let rest = raw
            .trim_end()
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(": ("))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Self::err(n, format!("expected `{key}: (...)`")))?;
        Ok((n, rest))
    }
}

fn number<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, OntologyError> {
    s.trim()
        .parse()
        .map_err(|_| Lines::err(line, format!("bad number `{s}`")))
}

/// Splits `A=1, B=2` into pairs.
fn pairs(line: usize, s: &str) -> Result<Vec<(&str, u32)>, OntologyError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Lines::err(line, format!("expected `key=value`, got `{item}`")))?;
            Ok((k.trim(), number(line, v)?))
        })
        .collect()
}

fn keyed(line: usize, s: &str, keys: &[&str]) -> Result<Vec<u32>, OntologyError> {
    let got = pairs(line, s)?;
    if got.len() != keys.len() || got.iter().zip(keys).any(|((k, _), want)| k != want) {
        return Err(Lines::err(line, format!("expected keys {}", keys.join(", "))));
    }
    Ok(got.into_iter().map(|(_, v)| v).collect())
}

pub fn parse_ontology(text: &str) -> Result<SuccessPool, OntologyError> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    lines.skip_blank();
    let (n, header) = lines.field("Pool")?;
    let header = keyed(n, header, &["capacity", "next_id"])?;
    let (capacity, next_id) = (header[0] as usize, u64::from(header[1]));
    if capacity == 0 {
        return Err(Lines::err(n, "capacity must be at least 1"));
    }

    let mut records: Vec<SequenceRecord> = Vec::new();
    loop {
        lines.skip_blank();
        if lines.inner.peek().is_none() {
            break;
        }
        let (n, id) = lines.field("ID")?;
        let id: u64 = number(n, id)?;
        if id == 0 || id >= next_id || records.iter().any(|r| r.id == id) {
            return Err(Lines::err(n, format!("id {id} is zero, reused or not below next_id")));
        }
        let (_, name) = lines.field("Name")?;

        let (n, pre) = lines.field("Precondition")?;
        let cats: Vec<Category> = pre
            .split(',')
            .map(|c| match c.trim() {
                "Cold" => Ok(Category::Cold),
                "Warm" => Ok(Category::Warm),
                "Hot" => Ok(Category::Hot),
                other => Err(Lines::err(n, format!("unknown category `{other}`"))),
            })
            .collect::<Result<_, _>>()?;
        let precondition = PreconditionVector(
            cats.try_into()
                .map_err(|_| Lines::err(n, format!("expected {SEGMENTS} categories")))?,
        );

        let (n, input) = lines.field("Input")?;
        let input = keyed(n, input, &["Hot", "Warm", "Cold"])?;
        let input_summary = InputSummary {
            hot: input[0],
            warm: input[1],
            cold: input[2],
        };

        let (n_ops, ops) = lines.field("Operation")?;
        let mut operation_histogram = [0u32; 6];
        for (label, count) in pairs(n_ops, ops)? {
            let op = Opcode::ALL
                .into_iter()
                .find(|op| op.label() == label)
                .ok_or_else(|| Lines::err(n_ops, format!("unknown operation `{label}`")))?;
            if count == 0 || operation_histogram[op.index()] != 0 {
                return Err(Lines::err(n_ops, format!("zero or repeated count for `{label}`")));
            }
            operation_histogram[op.index()] = count;
        }

        let (n_exp, exp) = lines.field("Expectation")?;
        let exp = keyed(n_exp, exp, &["Success", "Fail"])?;

        let (n, weight) = lines.field("Weight")?;
        let weight: f64 = number(n, weight)?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(Lines::err(n, "weight must be finite and non-negative"));
        }
        let (n, replays) = lines.field("Replays")?;
        let replay_attempts = number(n, replays)?;

        let (n, genome) = lines.field("Genome")?;
        let genome = Genome::from(
            hex::decode(genome).map_err(|e| Lines::err(n, format!("bad genome hex: {e}")))?,
        );

        let (n, outcome) = lines.field("Outcome")?;
        let outcomes: Vec<bool> = outcome
            .chars()
            .map(|c| match c {
                'S' => Ok(true),
                'F' => Ok(false),
                other => Err(Lines::err(n, format!("unknown outcome `{other}`"))),
            })
            .collect::<Result<_, _>>()?;

        let record = SequenceRecord {
            id,
            name: name.to_string(),
            precondition,
            input_summary,
            operation_histogram,
            outcomes,
            weight,
            replay_attempts,
            genome,
        };
        let len = record.sequence_len() as u32;
        if record.expectation() != (exp[0], exp[1]) {
            return Err(Lines::err(n_exp, "expectation disagrees with outcome"));
        }
        if operation_histogram.iter().sum::<u32>() != len
            || input_summary.hot + input_summary.warm + input_summary.cold != len
        {
            return Err(Lines::err(n_ops, "operation or input counts disagree with outcome"));
        }
        if record.genome.len() / RECORD_LEN < record.sequence_len() {
            return Err(Lines::err(n, "genome is shorter than the sequence"));
        }
        records.push(record);
        if records.len() > capacity {
            return Err(Lines::err(n, "more records than capacity"));
        }
    }
    Ok(SuccessPool::from_parts(records, capacity, next_id))
}
