//! Trace comparison on return data, gas usage and storage, plus
//! deterministic reproduction of divergences.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::bytecode::{BytecodeProgram, Fork};
use crate::engine::context::ExecContext;
use crate::engine::trace::{StepRecord, StorageDelta, Trace};
use crate::engine::{execute, program_key, Engine};
use crate::types::hex_word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    ReturnData,
    GasUsage,
    Storage,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ReturnData => "RETURN_DATA",
            Metric::GasUsage => "GAS_USAGE",
            Metric::Storage => "STORAGE",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Compared fields, in scan order for step records followed by final-state
/// fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Field {
    Pc,
    Op,
    Gas,
    GasCost,
    Stack,
    /// `mem_size` or memory contents (or their digest).
    Memory,
    StorageDelta,
    /// One trace ended before the other.
    Truncation,
    Halt,
    ReturnData,
    GasUsed,
    Storage,
}

impl Field {
    /// Step fields that describe the state before the step runs.
    pub fn is_pre_state(self) -> bool {
        matches!(self, Field::Pc | Field::Op | Field::Gas | Field::Stack | Field::Memory)
    }
}

/// Index of a step, or the final result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepIndex {
    Step(usize),
    Final,
}

impl Serialize for StepIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StepIndex::Step(i) => s.serialize_u64(*i as u64),
            StepIndex::Final => s.serialize_str("FINAL"),
        }
    }
}

impl<'de> Deserialize<'de> for StepIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(i) => Ok(StepIndex::Step(i)),
            Raw::S(s) if s == "FINAL" => Ok(StepIndex::Final),
            Raw::S(s) => Err(serde::de::Error::custom(format!("bad step index `{s}`"))),
        }
    }
}

impl fmt::Display for StepIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepIndex::Step(i) => write!(f, "{i}"),
            StepIndex::Final => f.write_str("FINAL"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDetail {
    pub field: Field,
    /// Rendered value in the first engine's trace.
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub metric: Metric,
    pub engines: (String, String),
    pub step_index: StepIndex,
    pub field_detail: FieldDetail,
    /// Corpus key of the program.
    pub program_ref: String,
    /// Seed the context was derived from.
    pub context_ref: u64,
    /// Content key of the exact context, including per-candidate overrides.
    pub context_key: String,
}

impl Divergence {
    /// Same divergence seen from the other engine.
    pub fn swapped(&self) -> Divergence {
        let mut d = self.clone();
        d.engines = (self.engines.1.clone(), self.engines.0.clone());
        std::mem::swap(&mut d.field_detail.a, &mut d.field_detail.b);
        d
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DifferError {
    #[error("need at least two traces, got {0}")]
    TooFewTraces(usize),
    #[error("traces come from different inputs: {0}")]
    MismatchedInputs(String),
    #[error("engines ran under different forks ({0} vs {1})")]
    ForkMismatch(Fork, Fork),
    #[error("missing artifact: {0}")]
    MissingArtifacts(String),
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
}

/// First point where two traces disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstDiff {
    None,
    Step { index: usize, field: Field },
    Final(Field),
}

/// Step fields that differ, in scan order.
pub fn step_field_diffs(a: &StepRecord, b: &StepRecord) -> Vec<Field> {
    let mut out = Vec::new();
    if a.pc != b.pc {
        out.push(Field::Pc);
    }
    if a.op != b.op {
        out.push(Field::Op);
    }
    if a.gas != b.gas {
        out.push(Field::Gas);
    }
    if a.gas_cost != b.gas_cost {
        out.push(Field::GasCost);
    }
    if a.stack != b.stack {
        out.push(Field::Stack);
    }
    if a.mem_size != b.mem_size || a.memory != b.memory {
        out.push(Field::Memory);
    }
    if a.storage_delta != b.storage_delta {
        out.push(Field::StorageDelta);
    }
    out
}

fn final_field_diffs(a: &Trace, b: &Trace) -> Vec<Field> {
    let (fa, fb) = (&a.final_state, &b.final_state);
    let mut out = Vec::new();
    if fa.halt != fb.halt {
        out.push(Field::Halt);
    }
    if fa.return_data != fb.return_data {
        out.push(Field::ReturnData);
    }
    if fa.gas_used != fb.gas_used {
        out.push(Field::GasUsed);
    }
    if fa.storage_after != fb.storage_after {
        out.push(Field::Storage);
    }
    out
}

/// Scans by step index, then field order. A strict prefix yields
/// [`Field::Truncation`] at the first missing index.
pub fn first_divergent_step(a: &Trace, b: &Trace) -> FirstDiff {
    for (i, (sa, sb)) in a.steps.iter().zip(&b.steps).enumerate() {
        if let Some(&field) = step_field_diffs(sa, sb).first() {
            return FirstDiff::Step { index: i, field };
        }
    }
    if a.steps.len() != b.steps.len() {
        return FirstDiff::Step { index: a.steps.len().min(b.steps.len()), field: Field::Truncation };
    }
    match final_field_diffs(a, b).first() {
        Some(&f) => FirstDiff::Final(f),
        None => FirstDiff::None,
    }
}

fn render_delta(d: &Option<StorageDelta>) -> String {
    let Some(d) = d else { return "none".into() };
    let mut parts = Vec::new();
    for (k, v) in &d.storage {
        parts.push(format!("sstore[{}]={}", hex_word(k), hex_word(v)));
    }
    for (k, v) in &d.transient {
        parts.push(format!("tstore[{}]={}", hex_word(k), hex_word(v)));
    }
    for (a, v) in &d.balances {
        parts.push(format!("balance[{a}]={}", hex_word(v)));
    }
    for a in &d.created {
        parts.push(format!("created[{a}]"));
    }
    format!("{{{}}}", parts.join(", "))
}

fn render_step(s: &StepRecord, field: Field) -> String {
    match field {
        Field::Pc => s.pc.to_string(),
        Field::Op => format!("0x{:02x} {}", s.op, s.op_name),
        Field::Gas => s.gas.to_string(),
        Field::GasCost => s.gas_cost.to_string(),
        Field::Stack => format!("[{}]", s.stack.iter().map(hex_word).collect::<Vec<_>>().join(", ")),
        Field::Memory => format!("size={} {}", s.mem_size, s.memory.as_deref().unwrap_or("-")),
        Field::StorageDelta => render_delta(&s.storage_delta),
        _ => String::new(),
    }
}

fn render_final(t: &Trace, field: Field) -> String {
    let f = &t.final_state;
    match field {
        Field::Halt => f.halt.to_string(),
        Field::ReturnData => format!("0x{}", hex::encode(&f.return_data)),
        Field::GasUsed => f.gas_used.to_string(),
        Field::Storage => f
            .storage_after
            .iter()
            .map(|(a, slots)| {
                let s: Vec<String> = slots.iter().map(|(k, v)| format!("{}={}", hex_word(k), hex_word(v))).collect();
                format!("{a}:{{{}}}", s.join(", "))
            })
            .collect::<Vec<_>>()
            .join("; "),
        Field::Truncation => format!("{} steps, {}", t.steps.len(), f.halt),
        _ => String::new(),
    }
}

struct Located {
    step_index: StepIndex,
    detail: FieldDetail,
}

fn at_step(a: &Trace, b: &Trace, i: usize, field: Field) -> Located {
    Located {
        step_index: StepIndex::Step(i),
        detail: FieldDetail { field, a: render_step(&a.steps[i], field), b: render_step(&b.steps[i], field) },
    }
}

fn at_final(a: &Trace, b: &Trace, field: Field) -> Located {
    Located { step_index: StepIndex::Final, detail: FieldDetail { field, a: render_final(a, field), b: render_final(b, field) } }
}

fn truncated(a: &Trace, b: &Trace) -> Located {
    let i = a.steps.len().min(b.steps.len());
    Located {
        step_index: StepIndex::Step(i),
        detail: FieldDetail { field: Field::Truncation, a: render_final(a, Field::Truncation), b: render_final(b, Field::Truncation) },
    }
}

/// Halt class, then memory along the common prefix, then returned bytes.
fn return_data_diff(a: &Trace, b: &Trace) -> Option<Located> {
    if a.halt() != b.halt() {
        return Some(at_final(a, b, Field::Halt));
    }
    for (i, (sa, sb)) in a.steps.iter().zip(&b.steps).enumerate() {
        if sa.mem_size != sb.mem_size || sa.memory != sb.memory {
            return Some(at_step(a, b, i, Field::Memory));
        }
    }
    (a.final_state.return_data != b.final_state.return_data).then(|| at_final(a, b, Field::ReturnData))
}

/// Per-step charge sequence, then the total.
fn gas_diff(a: &Trace, b: &Trace) -> Option<Located> {
    for (i, (sa, sb)) in a.steps.iter().zip(&b.steps).enumerate() {
        if sa.gas_cost != sb.gas_cost {
            return Some(at_step(a, b, i, Field::GasCost));
        }
    }
    if a.steps.len() != b.steps.len() {
        return Some(truncated(a, b));
    }
    (a.final_state.gas_used != b.final_state.gas_used).then(|| at_final(a, b, Field::GasUsed))
}

/// Deltas recorded around storage-affecting steps, then final storage.
fn storage_diff(a: &Trace, b: &Trace) -> Option<Located> {
    for (i, (sa, sb)) in a.steps.iter().zip(&b.steps).enumerate() {
        if sa.storage_delta != sb.storage_delta {
            return Some(at_step(a, b, i, Field::StorageDelta));
        }
    }
    (a.final_state.storage_after != b.final_state.storage_after).then(|| at_final(a, b, Field::Storage))
}

fn check_inputs(a: &Trace, b: &Trace) -> Result<(), DifferError> {
    if let (Some(pa), Some(pb)) = (&a.provenance, &b.provenance) {
        if pa.fork != pb.fork {
            return Err(DifferError::ForkMismatch(pa.fork, pb.fork));
        }
        if pa.program_key != pb.program_key {
            return Err(DifferError::MismatchedInputs(format!("program {} vs {}", pa.program_key, pb.program_key)));
        }
        if pa.context_key != pb.context_key {
            return Err(DifferError::MismatchedInputs(format!("context {} vs {}", pa.context_key, pb.context_key)));
        }
    }
    Ok(())
}

/// Compares two traces of the same input. Returns at most one divergence
/// per metric, in metric order.
pub fn compare_pair(
    a_id: &str,
    a: &Trace,
    b_id: &str,
    b: &Trace,
    context_ref: u64,
) -> Result<Vec<Divergence>, DifferError> {
    check_inputs(a, b)?;
    let (program_ref, context_key) = a
        .provenance
        .as_ref()
        .or(b.provenance.as_ref())
        .map(|p| (p.program_key.clone(), p.context_key.clone()))
        .unwrap_or_default();
    let found = [
        (Metric::ReturnData, return_data_diff(a, b)),
        (Metric::GasUsage, gas_diff(a, b)),
        (Metric::Storage, storage_diff(a, b)),
    ];
    Ok(found
        .into_iter()
        .filter_map(|(metric, loc)| {
            loc.map(|l| Divergence {
                metric,
                engines: (a_id.to_string(), b_id.to_string()),
                step_index: l.step_index,
                field_detail: l.detail,
                program_ref: program_ref.clone(),
                context_ref,
                context_key: context_key.clone(),
            })
        })
        .collect())
}

/// Compares every trace against the first one, the baseline.
pub fn compare(traces: &[(String, Trace)], context_ref: u64) -> Result<Vec<Divergence>, DifferError> {
    let [(base_id, base), rest @ ..] = traces else {
        return Err(DifferError::TooFewTraces(traces.len()));
    };
    if rest.is_empty() {
        return Err(DifferError::TooFewTraces(1));
    }
    let mut out = Vec::new();
    for (id, t) in rest {
        out.extend(compare_pair(base_id, base, id, t, context_ref)?);
    }
    Ok(out)
}

/// Lookup for the programs and contexts divergences refer to.
pub trait ArtifactStore {
    fn program(&self, key: &str) -> Option<BytecodeProgram>;
    fn context(&self, key: &str) -> Option<ExecContext>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    programs: BTreeMap<String, BytecodeProgram>,
    contexts: BTreeMap<String, ExecContext>,
}

impl MemoryStore {
    pub fn insert(&mut self, program: &BytecodeProgram, ctx: &ExecContext) -> (String, String) {
        let pk = program_key(program);
        let ck = ctx.key();
        self.programs.entry(pk.clone()).or_insert_with(|| program.clone());
        self.contexts.entry(ck.clone()).or_insert_with(|| ctx.clone());
        (pk, ck)
    }

    pub fn remove_program(&mut self, key: &str) {
        self.programs.remove(key);
    }
}

impl ArtifactStore for MemoryStore {
    fn program(&self, key: &str) -> Option<BytecodeProgram> {
        self.programs.get(key).cloned()
    }

    fn context(&self, key: &str) -> Option<ExecContext> {
        self.contexts.get(key).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reproduction {
    /// The same metric diverged again.
    pub confirmed: bool,
    /// The matching divergence from the re-run, if any.
    pub fresh: Option<Divergence>,
}

/// Re-executes both engines of `divergence` on its stored input.
pub fn reproduce(
    divergence: &Divergence,
    engines: &[&dyn Engine],
    store: &dyn ArtifactStore,
) -> Result<Reproduction, DifferError> {
    let program = store
        .program(&divergence.program_ref)
        .ok_or_else(|| DifferError::MissingArtifacts(format!("program {}", divergence.program_ref)))?;
    let ctx = store
        .context(&divergence.context_key)
        .ok_or_else(|| DifferError::MissingArtifacts(format!("context {}", divergence.context_key)))?;
    let find = |id: &str| {
        engines.iter().copied().find(|e| e.id() == id).ok_or_else(|| DifferError::UnknownEngine(id.to_string()))
    };
    let (ea, eb) = (find(&divergence.engines.0)?, find(&divergence.engines.1)?);
    let (ta, tb) = (execute(ea, &program, &ctx), execute(eb, &program, &ctx));
    let fresh = compare_pair(ea.id(), &ta, eb.id(), &tb, divergence.context_ref)?
        .into_iter()
        .find(|d| d.metric == divergence.metric);
    Ok(Reproduction { confirmed: fresh.is_some(), fresh })
}
