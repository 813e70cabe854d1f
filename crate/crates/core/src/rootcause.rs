//! Localizes a divergence to the responsible opcode, its handler and the
//! phase of opcode handling that went wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytecode::{op, BytecodeProgram};
use crate::differ::{first_divergent_step, step_field_diffs, Field, FirstDiff, StepIndex};
use crate::engine::context::ExecContext;
use crate::engine::{execute, Engine, HaltReason, Phase, Trace};

pub const UNKNOWN_FUNC: &str = "UNKNOWN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FuncMapProvenance {
    Static,
    Llm,
    Fixture,
}

/// Opcode to handler-function map for one engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuncMap {
    pub engine_id: String,
    pub entries: BTreeMap<u8, String>,
    pub provenance: FuncMapProvenance,
}

impl FuncMap {
    pub fn func(&self, opcode: u8) -> &str {
        self.entries.get(&opcode).map(String::as_str).unwrap_or(UNKNOWN_FUNC)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FuncMapAdapter {
    /// Ask the engine for its own layout.
    Static,
    /// JSON file: `{"0x0a": "handler", ...}` keyed by opcode.
    Fixture { path: PathBuf },
    /// Command receiving `{"engine": id, "opcodes": [..]}` on stdin and
    /// printing a fixture-shaped JSON object.
    Llm { argv: Vec<String> },
}

fn parse_entries(text: &str, opcodes: &[u8]) -> Result<BTreeMap<u8, String>, String> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut out = BTreeMap::new();
    for (k, v) in raw {
        let byte = u8::from_str_radix(k.trim_start_matches("0x"), 16).map_err(|e| format!("key `{k}`: {e}"))?;
        if opcodes.contains(&byte) {
            out.insert(byte, v);
        }
    }
    Ok(out)
}

fn ask_external(argv: &[String], engine_id: &str, opcodes: &[u8]) -> Result<String, String> {
    use std::io::Write;
    let (cmd, args) = argv.split_first().ok_or("empty argv")?;
    let mut child = Command::new(cmd)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| format!("{cmd}: {e}"))?;
    let body = serde_json::json!({ "engine": engine_id, "opcodes": opcodes });
    child.stdin.take().expect("piped stdin").write_all(body.to_string().as_bytes()).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exited with {}", out.status));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Builds the handler map for `opcodes`. An unavailable adapter degrades to
/// an empty map, so every lookup yields [`UNKNOWN_FUNC`].
pub fn extract_func_map(engine: &dyn Engine, opcodes: &[u8], adapter: &FuncMapAdapter) -> FuncMap {
    let (entries, provenance) = match adapter {
        FuncMapAdapter::Static => (
            opcodes.iter().filter_map(|&b| engine.handler_for(b).map(|h| (b, h))).collect(),
            FuncMapProvenance::Static,
        ),
        FuncMapAdapter::Fixture { path } => {
            let entries = std::fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_entries(&t, opcodes))
                .unwrap_or_else(|e| {
                    log::warn!("function map fixture {} unavailable: {e}", path.display());
                    BTreeMap::new()
                });
            (entries, FuncMapProvenance::Fixture)
        }
        FuncMapAdapter::Llm { argv } => {
            let entries = ask_external(argv, engine.id(), opcodes)
                .and_then(|t| parse_entries(&t, opcodes))
                .unwrap_or_else(|e| {
                    log::warn!("function map adapter unavailable: {e}");
                    BTreeMap::new()
                });
            (entries, FuncMapProvenance::Llm)
        }
    };
    FuncMap { engine_id: engine.id().to_string(), entries, provenance }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub step_index: StepIndex,
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCause {
    pub opcode: u8,
    pub op_name: String,
    pub func: String,
    pub cause: BTreeSet<Phase>,
    pub evidence: Evidence,
    /// The traces disagree before any opcode ran.
    pub non_execution_stage: bool,
}

impl RootCause {
    /// Phases joined with `+`, used in deduplication keys.
    pub fn phase_label(&self) -> String {
        if self.non_execution_stage {
            return "NON_EXECUTION_STAGE".into();
        }
        self.cause.iter().map(|p| p.short()).collect::<Vec<_>>().join("+")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RootCauseError {
    #[error("engine `{0}` is not deterministic on this input")]
    NotReproducible(String),
    #[error("the engines agree on this input")]
    NoDivergence,
}

/// Phase implied by how a trace halted.
fn halt_phase(h: HaltReason) -> Phase {
    match h {
        HaltReason::InvalidJumpdest | HaltReason::Success | HaltReason::Revert => Phase::ProgramCounter,
        HaltReason::StackUnderflow | HaltReason::StackOverflow => Phase::Stack,
        HaltReason::OutOfGas => Phase::Gas,
        _ => Phase::Operation,
    }
}

fn field_phase(field: Field, a: &Trace, b: &Trace, index: usize) -> Phase {
    match field {
        Field::Pc | Field::Op => Phase::ProgramCounter,
        Field::Gas | Field::GasCost | Field::GasUsed => Phase::Gas,
        Field::Stack if a.steps[index].stack.len() != b.steps[index].stack.len() => Phase::Stack,
        _ => Phase::Operation,
    }
}

struct Blame {
    step: Option<(usize, bool)>,
    cause: BTreeSet<Phase>,
    fields: Vec<Field>,
    index: StepIndex,
}

/// Pure blame assignment over two traces of the same input; `b` belongs to
/// the engine under suspicion.
pub fn blame(a: &Trace, b: &Trace) -> Option<(u8, BTreeSet<Phase>, Evidence, bool)> {
    let fd = first_divergent_step(a, b);
    let bl = match fd {
        FirstDiff::None => return None,
        FirstDiff::Step { index: k, field: Field::Truncation } => {
            let (short, long) = if a.steps.len() < b.steps.len() { (a, b) } else { (b, a) };
            if short.halt() == HaltReason::EngineError {
                // The short engine failed while dispatching step k.
                Blame {
                    step: Some((k, std::ptr::eq(long, b))),
                    cause: [Phase::Operation].into(),
                    fields: vec![Field::Truncation],
                    index: StepIndex::Step(k),
                }
            } else if k == 0 {
                Blame { step: None, cause: BTreeSet::new(), fields: vec![Field::Truncation], index: StepIndex::Step(0) }
            } else {
                Blame {
                    step: Some((k - 1, true)),
                    cause: [halt_phase(short.halt())].into(),
                    fields: vec![Field::Truncation],
                    index: StepIndex::Step(k),
                }
            }
        }
        FirstDiff::Step { index: k, .. } => {
            let diffs = step_field_diffs(&a.steps[k], &b.steps[k]);
            let pre: Vec<Field> = diffs.iter().copied().filter(|f| f.is_pre_state()).collect();
            if !pre.is_empty() {
                if k == 0 {
                    Blame { step: None, cause: BTreeSet::new(), fields: pre, index: StepIndex::Step(0) }
                } else {
                    let cause = pre.iter().map(|&f| field_phase(f, a, b, k)).collect();
                    Blame { step: Some((k - 1, true)), cause, fields: pre, index: StepIndex::Step(k) }
                }
            } else {
                let cause = diffs.iter().map(|&f| field_phase(f, a, b, k)).collect();
                Blame { step: Some((k, true)), cause, fields: diffs, index: StepIndex::Step(k) }
            }
        }
        FirstDiff::Final(field) => {
            let mut fields = vec![field];
            for f in [Field::Halt, Field::ReturnData, Field::GasUsed, Field::Storage] {
                if !fields.contains(&f) && differs_final(a, b, f) {
                    fields.push(f);
                }
            }
            let mut cause: BTreeSet<Phase> = [a.halt(), b.halt()]
                .into_iter()
                .filter(|h| !matches!(h, HaltReason::Success | HaltReason::Revert))
                .map(halt_phase)
                .collect();
            if cause.is_empty() {
                cause.insert(Phase::Operation);
            }
            match b.steps.len() {
                0 => Blame { step: None, cause: BTreeSet::new(), fields, index: StepIndex::Final },
                n => Blame { step: Some((n - 1, true)), cause, fields, index: StepIndex::Final },
            }
        }
    };
    let evidence = Evidence { step_index: bl.index, fields: bl.fields };
    match bl.step {
        Some((i, in_b)) => {
            let op = if in_b { b.steps[i].op } else { a.steps[i].op };
            Some((op, bl.cause, evidence, false))
        }
        None => {
            let op = b.steps.first().or(a.steps.first()).map(|s| s.op).unwrap_or(0x00);
            Some((op, BTreeSet::new(), evidence, true))
        }
    }
}

fn differs_final(a: &Trace, b: &Trace, f: Field) -> bool {
    let (fa, fb) = (&a.final_state, &b.final_state);
    match f {
        Field::Halt => fa.halt != fb.halt,
        Field::ReturnData => fa.return_data != fb.return_data,
        Field::GasUsed => fa.gas_used != fb.gas_used,
        Field::Storage => fa.storage_after != fb.storage_after,
        _ => false,
    }
}

/// Re-runs both engines (twice each) on the input and attributes the first
/// disagreement. `baseline` is the trusted side; `suspect` is blamed and its
/// function map consulted.
pub fn localize(
    program: &BytecodeProgram,
    ctx: &ExecContext,
    baseline: &dyn Engine,
    suspect: &dyn Engine,
    func_map: &FuncMap,
) -> Result<RootCause, RootCauseError> {
    let run_twice = |e: &dyn Engine| {
        let t = execute(e, program, ctx);
        if t.same_behaviour(&execute(e, program, ctx)) {
            Ok(t)
        } else {
            Err(RootCauseError::NotReproducible(e.id().to_string()))
        }
    };
    let a = run_twice(baseline)?;
    let b = run_twice(suspect)?;
    let (opcode, cause, evidence, non_exec) = blame(&a, &b).ok_or(RootCauseError::NoDivergence)?;
    let op_name = op(opcode).mnemonic.to_string();
    Ok(RootCause {
        opcode,
        op_name,
        func: func_map.func(opcode).to_string(),
        cause,
        evidence,
        non_execution_stage: non_exec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::context::ALICE;
    use crate::engine::{BuiltinEngine, FaultId};

    fn loc(fault: FaultId, hex: &str) -> RootCause {
        let r = BuiltinEngine::reference();
        let m = BuiltinEngine::mutant(fault);
        let spec = fault.spec();
        let map = extract_func_map(&m, &[spec.target_opcode], &FuncMapAdapter::Static);
        let p = BytecodeProgram::from_hex(hex).unwrap();
        localize(&p, &ExecContext::baseline(), &r, &m, &map).unwrap()
    }

    #[test]
    fn push1_skip_is_pc() {
        let rc = loc(FaultId::F4, "6001600201");
        assert_eq!(rc.op_name, "PUSH1");
        assert_eq!(rc.cause, [Phase::ProgramCounter].into());
        assert_eq!(rc.func, FaultId::F4.spec().handler);
    }

    #[test]
    fn balance_is_gas() {
        let rc = loc(FaultId::F3, &format!("73{}3100", hex::encode(ALICE.0)));
        assert_eq!(rc.op_name, "BALANCE");
        assert_eq!(rc.cause, [Phase::Gas].into());
        assert_eq!(rc.evidence.fields, vec![Field::GasCost]);
    }

    #[test]
    fn exp_is_operation() {
        let rc = loc(FaultId::F1, "61010060020a60005260206000f3");
        assert_eq!(rc.op_name, "EXP");
        assert_eq!(rc.cause, [Phase::Operation].into());
        assert_eq!(rc.evidence.step_index, StepIndex::Step(3));
    }

    #[test]
    fn jump_is_pc() {
        // Jump into the middle of a PUSH immediate.
        let rc = loc(FaultId::F2, "6004566000005b00");
        assert_eq!(rc.op_name, "JUMP");
        assert_eq!(rc.cause, [Phase::ProgramCounter].into());
    }

    #[test]
    fn selfdestruct_dispatch_failure() {
        let rc = loc(FaultId::F6, &format!("73{}ff", hex::encode(ALICE.0)));
        assert_eq!(rc.op_name, "SELFDESTRUCT");
        assert_eq!(rc.cause, [Phase::Operation].into());
    }

    #[test]
    fn stack_depth_vs_value() {
        let r = BuiltinEngine::reference();
        let t = execute(&r, &BytecodeProgram::from_hex("6001600200").unwrap(), &ExecContext::baseline());
        let mut v = t.clone();
        v.steps[2].stack[1] = crate::types::Word::from(9u64);
        let (_, cause, _, _) = blame(&t, &v).unwrap();
        assert_eq!(cause, [Phase::Operation].into());
        let mut d = t.clone();
        d.steps[2].stack.pop();
        let (op, cause, _, _) = blame(&t, &d).unwrap();
        assert_eq!(op, 0x60);
        assert_eq!(cause, [Phase::Stack].into());
    }

    #[test]
    fn first_step_difference_is_non_execution() {
        let r = BuiltinEngine::reference();
        let t = execute(&r, &BytecodeProgram::from_hex("6001").unwrap(), &ExecContext::baseline());
        let mut d = t.clone();
        d.steps[0].gas += 1;
        let (_, cause, _, non_exec) = blame(&t, &d).unwrap();
        assert!(non_exec && cause.is_empty());
    }

    #[test]
    fn no_divergence() {
        let r = BuiltinEngine::reference();
        let map = extract_func_map(&r, &[0x00], &FuncMapAdapter::Static);
        let p = BytecodeProgram::from_hex("00").unwrap();
        assert_eq!(localize(&p, &ExecContext::baseline(), &r, &r, &map), Err(RootCauseError::NoDivergence));
    }

    #[test]
    fn unavailable_adapter_degrades_to_unknown() {
        let m = BuiltinEngine::mutant(FaultId::F3);
        let map = extract_func_map(&m, &[0x31], &FuncMapAdapter::Llm { argv: vec!["/nonexistent".into()] });
        assert_eq!(map.func(0x31), UNKNOWN_FUNC);
        let rc = {
            let r = BuiltinEngine::reference();
            let p = BytecodeProgram::from_hex(&format!("73{}3100", hex::encode(ALICE.0))).unwrap();
            localize(&p, &ExecContext::baseline(), &r, &m, &map).unwrap()
        };
        assert_eq!(rc.func, UNKNOWN_FUNC);
        assert_eq!(rc.cause, [Phase::Gas].into());
    }

    #[test]
    fn fixture_map() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        std::fs::write(&path, r#"{"0x0a": "opExp", "0x01": "opAdd"}"#).unwrap();
        let m = BuiltinEngine::reference();
        let map = extract_func_map(&m, &[0x0a], &FuncMapAdapter::Fixture { path });
        assert_eq!(map.provenance, FuncMapProvenance::Fixture);
        assert_eq!(map.func(0x0a), "opExp");
        assert_eq!(map.func(0x01), UNKNOWN_FUNC);
    }

    #[test]
    fn static_reference_map() {
        let r = BuiltinEngine::reference();
        let map = extract_func_map(&r, &[0x0a], &FuncMapAdapter::Static);
        assert_eq!(map.func(0x0a), r.handler_for(0x0a).unwrap());
    }
}
