//! Per-opcode semantic contract: gas rules and the enumerated control-flow
//! paths used as generation targets and as the coverage denominator.

use std::collections::HashMap;
use std::fmt;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bytecode::{self, Fork, OpInfo};
use crate::table::TABLE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OpSpecError {
    #[error("opcode 0x{byte:02x} is not defined at {fork}")]
    UndefinedOpcode { byte: u8, fork: Fork },
    #[error("gas rule {rule:?} needs dynamic input `{input}`")]
    MissingDynamicInput { rule: DynamicRule, input: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PathId {
    Success,
    StackUnderflow,
    StackOverflow,
    OutOfGas,
    InvalidJumpdest,
    WriteInStatic,
    InvalidOpcode,
}

impl PathId {
    pub fn as_str(self) -> &'static str {
        match self {
            PathId::Success => "SUCCESS",
            PathId::StackUnderflow => "STACK_UNDERFLOW",
            PathId::StackOverflow => "STACK_OVERFLOW",
            PathId::OutOfGas => "OUT_OF_GAS",
            PathId::InvalidJumpdest => "INVALID_JUMPDEST",
            PathId::WriteInStatic => "WRITE_IN_STATIC",
            PathId::InvalidOpcode => "INVALID_OPCODE",
        }
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Machine-readable condition under which a path is taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathTrigger {
    Always,
    /// Fewer than `required` items on the stack when the opcode is fetched.
    StackBelow { required: u8 },
    /// More than `max_depth` items on the stack when the opcode is fetched.
    StackAbove { max_depth: u16 },
    /// Remaining gas below the step's total cost.
    GasBelowCost,
    /// Target operand is not in the program's JUMPDEST set (and, for JUMPI,
    /// the condition operand is non-zero).
    JumpTargetNotJumpdest { target_operand: u8, condition_operand: Option<u8> },
    /// Executing inside a static call; `value_operand` must also be non-zero
    /// when present.
    StaticContext { value_operand: Option<u8> },
    /// The opcode is the designated invalid instruction.
    DesignatedInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecPath {
    pub path_id: PathId,
    pub trigger: PathTrigger,
    /// The path halts execution exceptionally.
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicRule {
    None,
    Exp,
    MemoryWord,
    MemoryByte,
    MemoryRange,
    Keccak,
    Copy,
    Mcopy,
    AccountAccess,
    StorageLoad,
    Sstore,
    Log,
    Create,
    Create2,
    Call,
    Selfdestruct,
}

/// What a generator should place in each operand slot (top of stack first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandKind {
    Word,
    ByteIndex,
    Shift,
    MemOffset,
    MemSize,
    DataOffset,
    Address,
    Slot,
    BlockNumber,
    JumpDest,
    Condition,
    Value,
    Gas,
    InitcodeSize,
}

/// Gas schedule constants shared by the interpreter and [`gas_cost`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConstants {
    pub memory_word: u64,
    pub memory_quad_divisor: u64,
    pub copy_word: u64,
    pub keccak_word: u64,
    pub exp_byte: u64,
    pub warm_access: u64,
    pub cold_account_access: u64,
    pub cold_sload: u64,
    pub sstore_set: u64,
    pub sstore_reset: u64,
    pub sstore_stipend: u64,
    pub log_topic: u64,
    pub log_data: u64,
    pub initcode_word: u64,
    pub value_transfer: u64,
    pub new_account: u64,
    pub selfdestruct_new_account: u64,
    pub stack_limit: usize,
}

pub fn gas_constants() -> &'static GasConstants {
    &TABLE.constants
}

pub fn words(len: u64) -> u64 {
    len.div_ceil(32)
}

/// Quadratic memory cost of holding `words` 32-byte words.
pub fn memory_cost(words: u64) -> u64 {
    let c = gas_constants();
    let w = words as u128;
    (c.memory_word as u128 * w + w * w / c.memory_quad_divisor as u128).min(u64::MAX as u128) as u64
}

pub fn memory_expansion_cost(words_before: u64, words_after: u64) -> u64 {
    if words_after <= words_before {
        0
    } else {
        memory_cost(words_after) - memory_cost(words_before)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SstoreValues {
    pub original: ruint::aliases::U256,
    pub current: ruint::aliases::U256,
    pub new: ruint::aliases::U256,
}

/// Observed values a dynamic gas rule depends on. Only the fields the rule
/// reads need to be set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicInputs {
    pub exponent_bytes: Option<u64>,
    /// Active memory size in words before and after the step's expansion.
    pub memory_words: Option<(u64, u64)>,
    /// Bytes hashed, copied, logged or used as init code.
    pub data_len: Option<u64>,
    pub warm: Option<bool>,
    pub sstore: Option<SstoreValues>,
    pub value_transfer: Option<bool>,
    pub new_account: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpSpec {
    pub opcode: &'static OpInfo,
    pub static_gas: u64,
    pub dynamic: DynamicRule,
    /// Handler identifier in the reference interpreter.
    pub handler: &'static str,
    pub args: Vec<OperandKind>,
    /// Seeds for this opcode write memory before pushing operands.
    pub mem_setup: bool,
    pub paths: Vec<SpecPath>,
}

impl OpSpec {
    pub fn mnemonic(&self) -> &'static str {
        self.opcode.mnemonic
    }

    pub fn has_path(&self, id: PathId) -> bool {
        self.paths.iter().any(|p| p.path_id == id)
    }

    pub fn operand_kinds(&self) -> Vec<OperandKind> {
        if self.args.is_empty() {
            vec![OperandKind::Word; self.opcode.pops as usize]
        } else {
            self.args.clone()
        }
    }

    /// Graphviz rendering of the path model, the form handed to code
    /// generation adapters.
    pub fn render_path_model(&self) -> String {
        let name = self.mnemonic();
        let mut out = format!("digraph {name} {{\n  entry [label=\"{name} fetched\"];\n");
        let mut prev = "entry".to_string();
        for path in &self.paths {
            let node = path.path_id.as_str();
            let cond = match &path.trigger {
                PathTrigger::Always => "ok".to_string(),
                PathTrigger::StackBelow { required } => format!("len(stack) < {required}"),
                PathTrigger::StackAbove { max_depth } => format!("len(stack) > {max_depth}"),
                PathTrigger::GasBelowCost => "gas_left < cost".to_string(),
                PathTrigger::JumpTargetNotJumpdest { target_operand, condition_operand } => {
                    match condition_operand {
                        Some(c) => format!("arg{c} != 0 and arg{target_operand} not in jumpdests"),
                        None => format!("arg{target_operand} not in jumpdests"),
                    }
                }
                PathTrigger::StaticContext { value_operand } => match value_operand {
                    Some(v) => format!("is_static and arg{v} != 0"),
                    None => "is_static".to_string(),
                },
                PathTrigger::DesignatedInvalid => "always".to_string(),
            };
            out.push_str(&format!("  {prev} -> {node} [label=\"{cond}\"];\n"));
            if path.path_id == PathId::Success {
                continue;
            }
            prev = node.to_string();
        }
        out.push_str("}\n");
        out
    }
}

fn trigger_for(id: PathId, info: &OpInfo) -> PathTrigger {
    match id {
        PathId::Success => PathTrigger::Always,
        PathId::StackUnderflow => PathTrigger::StackBelow { required: info.pops },
        PathId::StackOverflow => PathTrigger::StackAbove {
            max_depth: (gas_constants().stack_limit - (info.pushes - info.pops) as usize) as u16,
        },
        PathId::OutOfGas => PathTrigger::GasBelowCost,
        PathId::InvalidJumpdest => PathTrigger::JumpTargetNotJumpdest {
            target_operand: 0,
            condition_operand: (info.byte == 0x57).then_some(1),
        },
        PathId::WriteInStatic => PathTrigger::StaticContext {
            value_operand: (info.byte == 0xf1).then_some(2),
        },
        PathId::InvalidOpcode => PathTrigger::DesignatedInvalid,
    }
}

struct SpecRegistry {
    by_byte: HashMap<u8, OpSpec>,
}

static SPECS: Lazy<SpecRegistry> = Lazy::new(|| {
    let by_byte = TABLE
        .opcodes
        .iter()
        .map(|rec| {
            let info = bytecode::op(rec.byte);
            let paths = rec
                .paths
                .iter()
                .map(|&id| SpecPath {
                    path_id: id,
                    trigger: trigger_for(id, info),
                    terminal: id != PathId::Success,
                    note: (id == PathId::Success && info.is_push())
                        .then(|| "immediate bytes past the end of code read as zero".to_string()),
                })
                .collect();
            let spec = OpSpec {
                opcode: info,
                static_gas: rec.static_gas,
                dynamic: rec.dynamic,
                handler: Box::leak(rec.handler.clone().into_boxed_str()),
                args: rec.args.clone(),
                mem_setup: rec.mem_setup,
                paths,
            };
            (rec.byte, spec)
        })
        .collect();
    SpecRegistry { by_byte }
});

pub fn spec_for(byte: u8, fork: Fork) -> Result<&'static OpSpec, OpSpecError> {
    bytecode::opcode_info(byte, fork)
        .and_then(|_| SPECS.by_byte.get(&byte))
        .ok_or(OpSpecError::UndefinedOpcode { byte, fork })
}

/// Specs of every opcode active at `fork`, ordered by byte.
pub fn all_specs(fork: Fork) -> Vec<&'static OpSpec> {
    bytecode::defined_opcodes()
        .filter_map(|o| spec_for(o.byte, fork).ok())
        .collect()
}

pub fn enumerate_paths(spec: &OpSpec) -> &[SpecPath] {
    &spec.paths
}

pub fn gas_cost(spec: &OpSpec, inputs: &DynamicInputs) -> Result<u64, OpSpecError> {
    let c = gas_constants();
    let rule = spec.dynamic;
    let need = |v: Option<u64>, input: &'static str| {
        v.ok_or(OpSpecError::MissingDynamicInput { rule, input })
    };
    let need_bool = |v: Option<bool>, input: &'static str| {
        v.ok_or(OpSpecError::MissingDynamicInput { rule, input })
    };
    let memory = || -> Result<u64, OpSpecError> {
        let (before, after) = inputs
            .memory_words
            .ok_or(OpSpecError::MissingDynamicInput { rule, input: "memory_words" })?;
        Ok(memory_expansion_cost(before, after))
    };
    let access = |warm: bool| if warm { c.warm_access } else { c.cold_account_access };

    let dynamic = match rule {
        DynamicRule::None => 0,
        DynamicRule::Exp => c.exp_byte * need(inputs.exponent_bytes, "exponent_bytes")?,
        DynamicRule::MemoryWord | DynamicRule::MemoryByte | DynamicRule::MemoryRange => memory()?,
        DynamicRule::Keccak => c.keccak_word * words(need(inputs.data_len, "data_len")?) + memory()?,
        DynamicRule::Copy | DynamicRule::Mcopy => {
            c.copy_word * words(need(inputs.data_len, "data_len")?) + memory()?
        }
        DynamicRule::AccountAccess => access(need_bool(inputs.warm, "warm")?),
        DynamicRule::StorageLoad => {
            if need_bool(inputs.warm, "warm")? {
                c.warm_access
            } else {
                c.cold_sload
            }
        }
        DynamicRule::Sstore => {
            let warm = need_bool(inputs.warm, "warm")?;
            let v = inputs
                .sstore
                .ok_or(OpSpecError::MissingDynamicInput { rule, input: "sstore" })?;
            let mut g = if warm { 0 } else { c.cold_sload };
            if v.original == v.current && v.current != v.new {
                g += if v.original.is_zero() { c.sstore_set } else { c.sstore_reset };
            } else {
                g += c.warm_access;
            }
            g
        }
        DynamicRule::Log => {
            let topics = spec.opcode.pops as u64 - 2;
            c.log_topic * topics + c.log_data * need(inputs.data_len, "data_len")? + memory()?
        }
        DynamicRule::Create => c.initcode_word * words(need(inputs.data_len, "data_len")?) + memory()?,
        DynamicRule::Create2 => {
            (c.initcode_word + c.keccak_word) * words(need(inputs.data_len, "data_len")?) + memory()?
        }
        DynamicRule::Call => {
            let value = need_bool(inputs.value_transfer, "value_transfer")?;
            let new_account = need_bool(inputs.new_account, "new_account")?;
            let mut g = access(need_bool(inputs.warm, "warm")?) + memory()?;
            if value {
                g += c.value_transfer;
                if new_account {
                    g += c.new_account;
                }
            }
            g
        }
        DynamicRule::Selfdestruct => {
            let mut g = 0;
            if !need_bool(inputs.warm, "warm")? {
                g += c.cold_account_access;
            }
            if need_bool(inputs.new_account, "new_account")? {
                g += c.selfdestruct_new_account;
            }
            g
        }
    };
    Ok(spec.static_gas + dynamic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ruint::aliases::U256;

    fn spec(m: &str) -> &'static OpSpec {
        spec_for(bytecode::op_by_mnemonic(m).unwrap().byte, Fork::Cancun).unwrap()
    }

    fn ids(s: &OpSpec) -> Vec<PathId> {
        enumerate_paths(s).iter().map(|p| p.path_id).collect()
    }

    #[test]
    fn byte_paths() {
        assert_eq!(
            ids(spec("BYTE")),
            vec![PathId::Success, PathId::StackUnderflow, PathId::OutOfGas]
        );
    }

    #[test]
    fn jump_and_stop_paths() {
        assert!(spec("JUMP").has_path(PathId::InvalidJumpdest));
        assert_eq!(ids(spec("STOP")), vec![PathId::Success]);
        assert_eq!(ids(spec("EXP")), vec![PathId::Success, PathId::StackUnderflow, PathId::OutOfGas]);
        assert!(spec("SSTORE").has_path(PathId::WriteInStatic));
    }

    #[test]
    fn push1_success_note() {
        let p = &enumerate_paths(spec("PUSH1"))[0];
        assert_eq!(p.path_id, PathId::Success);
        assert!(p.note.as_deref().unwrap().contains("zero"));
    }

    #[test]
    fn same_object_for_repeated_calls() {
        let a = spec_for(0x1a, Fork::Cancun).unwrap();
        let b = spec_for(0x1a, Fork::Cancun).unwrap();
        assert!(std::ptr::eq(a, b));
    }

    #[test]
    fn undefined_opcode() {
        assert_eq!(
            spec_for(0x0c, Fork::Cancun).unwrap_err(),
            OpSpecError::UndefinedOpcode { byte: 0x0c, fork: Fork::Cancun }
        );
        assert!(spec_for(0x5c, Fork::Shanghai).is_err());
    }

    #[test]
    fn path_invariants() {
        for s in all_specs(Fork::Cancun) {
            let ids = ids(s);
            let mut dedup = ids.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), ids.len(), "{}", s.mnemonic());
            if s.mnemonic() == "INVALID" {
                assert_eq!(ids, vec![PathId::InvalidOpcode]);
                continue;
            }
            assert!(ids.contains(&PathId::Success));
            assert_eq!(ids.contains(&PathId::StackUnderflow), s.opcode.pops > 0, "{}", s.mnemonic());
            let chargeable = s.static_gas > 0 || s.dynamic != DynamicRule::None;
            assert_eq!(ids.contains(&PathId::OutOfGas), chargeable, "{}", s.mnemonic());
        }
    }

    #[test]
    fn balance_warm_cold() {
        let s = spec("BALANCE");
        let warm = DynamicInputs { warm: Some(true), ..Default::default() };
        let cold = DynamicInputs { warm: Some(false), ..Default::default() };
        assert_eq!(gas_cost(s, &warm).unwrap(), 100);
        assert_eq!(gas_cost(s, &cold).unwrap(), 2600);
        assert!(matches!(
            gas_cost(s, &DynamicInputs::default()),
            Err(OpSpecError::MissingDynamicInput { input: "warm", .. })
        ));
    }

    #[test]
    fn exp_costs() {
        let s = spec("EXP");
        let zero = DynamicInputs { exponent_bytes: Some(0), ..Default::default() };
        assert_eq!(gas_cost(s, &zero).unwrap(), 10);
        // 256 = 0x0100 occupies two bytes.
        let two = DynamicInputs { exponent_bytes: Some(2), ..Default::default() };
        assert_eq!(gas_cost(s, &two).unwrap(), 10 + 2 * 50);
    }

    #[test]
    fn memory_schedule() {
        assert_eq!(memory_cost(0), 0);
        assert_eq!(memory_cost(1), 3);
        // 3 * 1024 + 1024^2 / 512
        assert_eq!(memory_cost(1024), 3072 + 2048);
        assert_eq!(memory_expansion_cost(1, 1), 0);
        assert_eq!(memory_expansion_cost(1, 2), 3);
        let s = spec("MLOAD");
        let i = DynamicInputs { memory_words: Some((0, 1)), ..Default::default() };
        assert_eq!(gas_cost(s, &i).unwrap(), 6);
    }

    #[test]
    fn sstore_rules() {
        let s = spec("SSTORE");
        let v = |o: u64, c: u64, n: u64| SstoreValues {
            original: U256::from(o),
            current: U256::from(c),
            new: U256::from(n),
        };
        let run = |warm, vals| {
            gas_cost(s, &DynamicInputs { warm: Some(warm), sstore: Some(vals), ..Default::default() }).unwrap()
        };
        assert_eq!(run(false, v(0, 0, 1)), 2100 + 20000);
        assert_eq!(run(true, v(0, 0, 1)), 20000);
        assert_eq!(run(true, v(1, 1, 2)), 2900);
        assert_eq!(run(true, v(1, 2, 3)), 100);
        assert_eq!(run(false, v(1, 1, 1)), 2100 + 100);
    }

    #[test]
    fn log_and_call_costs() {
        let log2 = spec("LOG2");
        let i = DynamicInputs { data_len: Some(10), memory_words: Some((1, 1)), ..Default::default() };
        assert_eq!(gas_cost(log2, &i).unwrap(), 375 + 2 * 375 + 80);
        let call = spec("CALL");
        let i = DynamicInputs {
            warm: Some(false),
            value_transfer: Some(true),
            new_account: Some(true),
            memory_words: Some((0, 0)),
            ..Default::default()
        };
        assert_eq!(gas_cost(call, &i).unwrap(), 2600 + 9000 + 25000);
    }

    #[test]
    fn path_model_rendering_mentions_every_path() {
        let dot = spec("BYTE").render_path_model();
        for p in enumerate_paths(spec("BYTE")) {
            assert!(dot.contains(p.path_id.as_str()));
        }
        assert!(dot.starts_with("digraph BYTE"));
    }

    #[test]
    fn enumeration_is_stable() {
        let a: Vec<_> = all_specs(Fork::Cancun).iter().flat_map(|s| ids(s)).collect();
        let b: Vec<_> = all_specs(Fork::Cancun).iter().flat_map(|s| ids(s)).collect();
        assert_eq!(a, b);
    }
}
