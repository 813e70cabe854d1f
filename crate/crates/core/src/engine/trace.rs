//! Step traces and their JSON-lines wire format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytecode::Fork;
use crate::opspec::DynamicInputs;
use crate::types::{hex_u64, hex_word, parse_hex_u64, parse_hex_word, sha256_hex, Address, Word};

/// Largest memory emitted verbatim in a step record; larger memories are
/// replaced by a digest.
pub const MEMORY_SNAPSHOT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HaltReason {
    Success,
    Revert,
    OutOfGas,
    StackUnderflow,
    StackOverflow,
    InvalidJumpdest,
    InvalidOpcode,
    WriteInStatic,
    EngineError,
}

impl HaltReason {
    pub const ALL: [HaltReason; 9] = [
        HaltReason::Success,
        HaltReason::Revert,
        HaltReason::OutOfGas,
        HaltReason::StackUnderflow,
        HaltReason::StackOverflow,
        HaltReason::InvalidJumpdest,
        HaltReason::InvalidOpcode,
        HaltReason::WriteInStatic,
        HaltReason::EngineError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HaltReason::Success => "SUCCESS",
            HaltReason::Revert => "REVERT",
            HaltReason::OutOfGas => "OUT_OF_GAS",
            HaltReason::StackUnderflow => "STACK_UNDERFLOW",
            HaltReason::StackOverflow => "STACK_OVERFLOW",
            HaltReason::InvalidJumpdest => "INVALID_JUMPDEST",
            HaltReason::InvalidOpcode => "INVALID_OPCODE",
            HaltReason::WriteInStatic => "WRITE_IN_STATIC",
            HaltReason::EngineError => "ENGINE_ERROR",
        }
    }

    /// Exceptional halts consume all remaining gas and revert state.
    pub fn is_exceptional(self) -> bool {
        !matches!(self, HaltReason::Success | HaltReason::Revert)
    }

    /// Maps canonical names and the free-text messages common engines print.
    pub fn normalize(text: &str) -> Option<HaltReason> {
        let head = text.split(':').next().unwrap_or("").trim();
        if let Some(h) = HaltReason::ALL.iter().find(|h| h.as_str() == head) {
            return Some(*h);
        }
        let t = text.to_ascii_lowercase();
        let table: [(&str, HaltReason); 12] = [
            ("out of gas", HaltReason::OutOfGas),
            ("outofgas", HaltReason::OutOfGas),
            ("stack underflow", HaltReason::StackUnderflow),
            ("stack overflow", HaltReason::StackOverflow),
            ("stack limit", HaltReason::StackOverflow),
            ("invalid jump", HaltReason::InvalidJumpdest),
            ("bad jump", HaltReason::InvalidJumpdest),
            ("invalid opcode", HaltReason::InvalidOpcode),
            ("undefined instruction", HaltReason::InvalidOpcode),
            ("write protection", HaltReason::WriteInStatic),
            ("static", HaltReason::WriteInStatic),
            ("revert", HaltReason::Revert),
        ];
        table.iter().find(|(k, _)| t.contains(k)).map(|(_, h)| *h)
    }
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HaltReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HaltReason::normalize(s).ok_or_else(|| format!("unrecognized halt reason `{s}`"))
    }
}

/// World-state change caused by one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageDelta {
    /// Persistent slots of the executing account: slot -> value after the step.
    pub storage: BTreeMap<Word, Word>,
    pub transient: BTreeMap<Word, Word>,
    /// Accounts whose balance changed: address -> balance after the step.
    pub balances: BTreeMap<Address, Word>,
    pub created: BTreeSet<Address>,
}

impl StorageDelta {
    pub fn is_empty(&self) -> bool {
        self.storage.is_empty() && self.transient.is_empty() && self.balances.is_empty() && self.created.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub pc: usize,
    pub op: u8,
    pub op_name: String,
    /// Gas remaining before the step.
    pub gas: u64,
    /// Gas the step charges. On an exceptional halt this is the nominal cost
    /// of the step, not the remaining gas that the halt consumes.
    pub gas_cost: u64,
    /// Bottom to top.
    pub stack: Vec<Word>,
    pub mem_size: usize,
    /// `0x`-prefixed memory contents, or `sha256:<digest>` above
    /// [`MEMORY_SNAPSHOT_LIMIT`].
    pub memory: Option<String>,
    pub depth: u32,
    pub storage_delta: Option<StorageDelta>,
}

pub fn memory_snapshot(mem: &[u8]) -> String {
    if mem.len() <= MEMORY_SNAPSHOT_LIMIT {
        format!("0x{}", hex::encode(mem))
    } else {
        format!("sha256:{}", sha256_hex(mem))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalState {
    pub halt: HaltReason,
    /// Free-text diagnostic; never compared.
    pub detail: Option<String>,
    pub return_data: Vec<u8>,
    pub gas_used: u64,
    /// Non-empty persistent storage per account after execution.
    pub storage_after: BTreeMap<Address, BTreeMap<Word, Word>>,
}

/// Identifies what a trace was produced from; not part of the wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub program_key: String,
    pub context_key: String,
    pub fork: Fork,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub final_state: FinalState,
    pub provenance: Option<Provenance>,
    /// Gas-rule inputs the reference interpreter observed per step, when
    /// requested. Not part of the wire format.
    pub observed: Option<Vec<DynamicInputs>>,
}

impl Trace {
    pub fn engine_error(detail: impl Into<String>) -> Trace {
        Trace {
            steps: Vec::new(),
            final_state: FinalState {
                halt: HaltReason::EngineError,
                detail: Some(detail.into()),
                return_data: Vec::new(),
                gas_used: 0,
                storage_after: BTreeMap::new(),
            },
            provenance: None,
            observed: None,
        }
    }

    pub fn halt(&self) -> HaltReason {
        self.final_state.halt
    }

    /// Trace content ignoring provenance, observations and diagnostics.
    pub fn same_behaviour(&self, other: &Trace) -> bool {
        self.steps == other.steps
            && self.final_state.halt == other.final_state.halt
            && self.final_state.return_data == other.final_state.return_data
            && self.final_state.gas_used == other.final_state.gas_used
            && self.final_state.storage_after == other.final_state.storage_after
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(&WireStep::from(s)).expect("step serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&WireSummary::from(&self.final_state)).expect("summary serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("trace has no summary line")]
    MissingSummary,
}

fn word_map(m: &BTreeMap<Word, Word>) -> BTreeMap<String, String> {
    m.iter().map(|(k, v)| (hex_word(k), hex_word(v))).collect()
}

fn parse_word_map(m: &BTreeMap<String, String>) -> Result<BTreeMap<Word, Word>, String> {
    m.iter().map(|(k, v)| Ok((parse_hex_word(k)?, parse_hex_word(v)?))).collect()
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct WireDelta {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    storage: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    transient: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    balances: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    created: Vec<String>,
}

impl From<&StorageDelta> for WireDelta {
    fn from(d: &StorageDelta) -> Self {
        WireDelta {
            storage: word_map(&d.storage),
            transient: word_map(&d.transient),
            balances: d.balances.iter().map(|(a, v)| (a.to_string(), hex_word(v))).collect(),
            created: d.created.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl TryFrom<WireDelta> for StorageDelta {
    type Error = String;

    fn try_from(w: WireDelta) -> Result<Self, String> {
        Ok(StorageDelta {
            storage: parse_word_map(&w.storage)?,
            transient: parse_word_map(&w.transient)?,
            balances: w
                .balances
                .iter()
                .map(|(a, v)| Ok((a.parse::<Address>()?, parse_hex_word(v)?)))
                .collect::<Result<_, String>>()?,
            created: w.created.iter().map(|a| a.parse::<Address>()).collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireStep {
    pc: usize,
    op: u8,
    op_name: String,
    gas: String,
    gas_cost: String,
    stack: Vec<String>,
    mem_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    memory: Option<String>,
    depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    storage_delta: Option<WireDelta>,
}

impl From<&StepRecord> for WireStep {
    fn from(s: &StepRecord) -> Self {
        WireStep {
            pc: s.pc,
            op: s.op,
            op_name: s.op_name.clone(),
            gas: hex_u64(s.gas),
            gas_cost: hex_u64(s.gas_cost),
            stack: s.stack.iter().map(hex_word).collect(),
            mem_size: s.mem_size,
            memory: s.memory.clone(),
            depth: s.depth,
            storage_delta: s.storage_delta.as_ref().map(WireDelta::from),
        }
    }
}

impl TryFrom<WireStep> for StepRecord {
    type Error = String;

    fn try_from(w: WireStep) -> Result<Self, String> {
        Ok(StepRecord {
            pc: w.pc,
            op: w.op,
            op_name: w.op_name,
            gas: parse_hex_u64(&w.gas)?,
            gas_cost: parse_hex_u64(&w.gas_cost)?,
            stack: w.stack.iter().map(|s| parse_hex_word(s)).collect::<Result<_, _>>()?,
            mem_size: w.mem_size,
            memory: w.memory.map(|m| m.to_ascii_lowercase()),
            depth: w.depth,
            storage_delta: w.storage_delta.map(StorageDelta::try_from).transpose()?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireSummary {
    output: String,
    gas_used: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    storage: BTreeMap<String, BTreeMap<String, String>>,
}

impl From<&FinalState> for WireSummary {
    fn from(f: &FinalState) -> Self {
        let error = match (f.halt, &f.detail) {
            (HaltReason::Success, _) => None,
            (h, Some(d)) => Some(format!("{h}: {d}")),
            (h, None) => Some(h.to_string()),
        };
        WireSummary {
            output: format!("0x{}", hex::encode(&f.return_data)),
            gas_used: hex_u64(f.gas_used),
            error,
            storage: f.storage_after.iter().map(|(a, m)| (a.to_string(), word_map(m))).collect(),
        }
    }
}

impl TryFrom<WireSummary> for FinalState {
    type Error = String;

    fn try_from(w: WireSummary) -> Result<Self, String> {
        let (halt, detail) = match &w.error {
            None => (HaltReason::Success, None),
            Some(e) => {
                let halt = HaltReason::normalize(e).ok_or_else(|| format!("unrecognized error `{e}`"))?;
                let detail = e.split_once(':').map(|(_, d)| d.trim().to_string()).filter(|d| !d.is_empty());
                (halt, detail)
            }
        };
        let out = w.output.strip_prefix("0x").unwrap_or(&w.output);
        Ok(FinalState {
            halt,
            detail,
            return_data: hex::decode(out).map_err(|e| format!("bad output hex: {e}"))?,
            gas_used: parse_hex_u64(&w.gas_used)?,
            storage_after: w
                .storage
                .iter()
                .map(|(a, m)| Ok((a.parse::<Address>()?, parse_word_map(m)?)))
                .collect::<Result<_, String>>()?,
        })
    }
}

/// Parses the JSON-lines dialect. Unknown keys are ignored; a line is a
/// summary when it carries `gasUsed` and no `pc`.
pub fn parse_jsonl(text: &str) -> Result<Trace, TraceParseError> {
    let mut steps = Vec::new();
    let mut summary = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| TraceParseError::Line { line: line_no, reason };
        if summary.is_some() {
            return Err(err("content after summary line".into()));
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| err("expected a JSON object".into()))?;
        if obj.contains_key("pc") {
            let w: WireStep = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
            steps.push(StepRecord::try_from(w).map_err(err)?);
        } else if obj.contains_key("gasUsed") {
            let w: WireSummary = serde_json::from_value(value).map_err(|e| err(e.to_string()))?;
            summary = Some(FinalState::try_from(w).map_err(err)?);
        } else {
            return Err(err("neither a step nor a summary".into()));
        }
    }
    let final_state = summary.ok_or(TraceParseError::MissingSummary)?;
    Ok(Trace { steps, final_state, provenance: None, observed: None })
}
