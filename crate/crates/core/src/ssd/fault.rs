//! Seeded firmware defects.
//!
//! A fault set file holds one fault per line:
//!
//! ```text
//! # id | kind  | opcode | predicate
//! 3    | crash | write  | victim_line_count >= 11 && nlb >= 14
//! 7    | hang  | any    | true
//! ```
//!
//! Predicates are conjunctions of `field op value` terms over the state
//! snapshot taken before the command and the command's own fields.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{IoCommand, Opcode, StateSnapshot};

pub const DESK_SCALE_FAULTS: &str = include_str!("../../data/faults-desk-scale.txt");
pub const PAPER_SCALE_FAULTS: &str = include_str!("../../data/faults-paper-scale.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultKind {
    Crash,
    Hang,
}

impl FaultKind {
    pub fn name(self) -> &'static str {
        match self {
            FaultKind::Crash => "crash",
            FaultKind::Hang => "hang",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultField {
    VictimLineCount,
    FreeLineCount,
    TotalInvalidPages,
    MaxEraseCount,
    TotalEraseCount,
    GcInvocations,
    Lba,
    Nlb,
    PayloadSeed,
}

impl FaultField {
    const ALL: [FaultField; 9] = [
        FaultField::VictimLineCount,
        FaultField::FreeLineCount,
        FaultField::TotalInvalidPages,
        FaultField::MaxEraseCount,
        FaultField::TotalEraseCount,
        FaultField::GcInvocations,
        FaultField::Lba,
        FaultField::Nlb,
        FaultField::PayloadSeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultField::VictimLineCount => "victim_line_count",
            FaultField::FreeLineCount => "free_line_count",
            FaultField::TotalInvalidPages => "total_invalid_pages",
            FaultField::MaxEraseCount => "max_erase_count",
            FaultField::TotalEraseCount => "total_erase_count",
            FaultField::GcInvocations => "gc_invocations",
            FaultField::Lba => "lba",
            FaultField::Nlb => "nlb",
            FaultField::PayloadSeed => "payload_seed",
        }
    }

    fn value(self, state: &StateSnapshot, cmd: &IoCommand) -> u64 {
        match self {
            FaultField::VictimLineCount => state.victim_line_count,
            FaultField::FreeLineCount => state.free_line_count,
            FaultField::TotalInvalidPages => state.total_invalid_pages,
            FaultField::MaxEraseCount => state.max_erase_count,
            FaultField::TotalEraseCount => state.total_erase_count,
            FaultField::GcInvocations => state.gc_invocations,
            FaultField::Lba => u64::from(cmd.lba),
            FaultField::Nlb => u64::from(cmd.nlb),
            FaultField::PayloadSeed => u64::from(cmd.payload_seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    Ne,
}

impl CmpOp {
    const ALL: [CmpOp; 6] = [CmpOp::Ge, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Gt, CmpOp::Lt];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn eval(self, lhs: u64, rhs: u64) -> bool {
        match self {
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    pub field: FaultField,
    pub op: CmpOp,
    pub value: u64,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field.name(), self.op.symbol(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FaultSpec {
    pub fault_id: u16,
    pub kind: FaultKind,
    /// `None` matches any opcode.
    pub trigger_opcode: Option<Opcode>,
    pub predicate: Vec<Condition>,
}

impl FaultSpec {
    pub fn matches(&self, state: &StateSnapshot, cmd: &IoCommand) -> bool {
        if self.trigger_opcode.is_some_and(|op| op != cmd.opcode) {
            return false;
        }
        self.predicate
            .iter()
            .all(|c| c.op.eval(c.field.value(state, cmd), c.value))
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opcode = self.trigger_opcode.map_or("any", Opcode::name);
        write!(f, "{} | {} | {} | ", self.fault_id, self.kind, opcode)?;
        if self.predicate.is_empty() {
            return f.write_str("true");
        }
        for (i, c) in self.predicate.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A fault that fired on a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultEvent {
    pub fault_id: u16,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultParseError {
    #[error("line {line}: expected `id | kind | opcode | predicate`")]
    Shape { line: usize },
    #[error("line {line}: invalid fault id `{text}`")]
    Id { line: usize, text: String },
    #[error("line {line}: duplicate fault id {id}")]
    DuplicateId { line: usize, id: u16 },
    #[error("line {line}: unknown fault kind `{text}`")]
    Kind { line: usize, text: String },
    #[error("line {line}: unknown opcode `{text}`")]
    Opcode { line: usize, text: String },
    #[error("line {line}: malformed condition `{text}`")]
    Condition { line: usize, text: String },
    #[error("unknown fault preset `{0}`")]
    UnknownPreset(String),
}

fn parse_condition(text: &str, line: usize) -> Result<Condition, FaultParseError> {
    let err = || FaultParseError::Condition {
        line,
        text: text.to_string(),
    };
    let mut parts = text.split_whitespace();
    let (Some(field), Some(op), Some(value), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(err());
    };
    let field = FaultField::ALL
        .into_iter()
        .find(|f| f.name() == field)
        .ok_or_else(err)?;
    let op = CmpOp::ALL
        .into_iter()
        .find(|o| o.symbol() == op)
        .ok_or_else(err)?;
    let value = value.parse().map_err(|_| err())?;
    Ok(Condition { field, op, value })
}

/// Parses a fault set file. Blank lines and `#` comments are skipped; the
/// result is sorted by ascending fault id.
pub fn parse_fault_set(text: &str) -> Result<Vec<FaultSpec>, FaultParseError> {
    let mut faults: Vec<FaultSpec> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split('|').map(str::trim).collect();
        let [id, kind, opcode, predicate] = fields[..] else {
            return Err(FaultParseError::Shape { line });
        };
        let fault_id: u16 = id.parse().map_err(|_| FaultParseError::Id {
            line,
            text: id.to_string(),
        })?;
        if faults.iter().any(|f| f.fault_id == fault_id) {
            return Err(FaultParseError::DuplicateId { line, id: fault_id });
        }
        let kind = match kind.to_ascii_lowercase().as_str() {
            "crash" => FaultKind::Crash,
            "hang" => FaultKind::Hang,
            _ => {
                return Err(FaultParseError::Kind {
                    line,
                    text: kind.to_string(),
                })
            }
        };
        let trigger_opcode = if opcode.eq_ignore_ascii_case("any") {
            None
        } else {
            Some(
                Opcode::from_str(opcode).map_err(|_| FaultParseError::Opcode {
                    line,
                    text: opcode.to_string(),
                })?,
            )
        };
        let predicate = if predicate == "true" {
            Vec::new()
        } else {
            predicate
                .split("&&")
                .map(|c| parse_condition(c.trim(), line))
                .collect::<Result<_, _>>()?
        };
        faults.push(FaultSpec {
            fault_id,
            kind,
            trigger_opcode,
            predicate,
        });
    }
    faults.sort_by_key(|f| f.fault_id);
    Ok(faults)
}

pub fn render_fault_set(faults: &[FaultSpec]) -> String {
    let mut out = String::from("# id | kind | opcode | predicate\n");
    for f in faults {
        out.push_str(&f.to_string());
        out.push('\n');
    }
    out
}

/// The shipped desk-scale fault set.
pub fn default_fault_set() -> Vec<FaultSpec> {
    parse_fault_set(DESK_SCALE_FAULTS).expect("shipped fault set parses")
}

/// Fault set preset by name: `desk-scale`, `paper-scale` or `none`.
pub fn fault_set_preset(name: &str) -> Result<Vec<FaultSpec>, FaultParseError> {
    match name {
        "desk-scale" => parse_fault_set(DESK_SCALE_FAULTS),
        "paper-scale" => parse_fault_set(PAPER_SCALE_FAULTS),
        "none" => Ok(Vec::new()),
        other => Err(FaultParseError::UnknownPreset(other.to_string())),
    }
}
