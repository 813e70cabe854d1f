//! Loader for the embedded opcode table (`data/opcodes.toml`).
//!
//! The table is parsed once; every other module reads from the resulting
//! static registry.

use once_cell::sync::Lazy;
use serde::Deserialize;

use crate::bytecode::Fork;
use crate::opspec::{DynamicRule, GasConstants, OperandKind, PathId};

pub(crate) const TABLE_SOURCE: &str = include_str!("../data/opcodes.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct OpcodeRecord {
    pub byte: u8,
    pub mnemonic: String,
    #[serde(default)]
    pub immediate_len: u8,
    pub pops: u8,
    pub pushes: u8,
    pub fork: Fork,
    pub static_gas: u64,
    pub dynamic: DynamicRule,
    pub handler: String,
    #[serde(default)]
    pub args: Vec<OperandKind>,
    #[serde(default)]
    pub mem_setup: bool,
    pub paths: Vec<PathId>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct OpcodeTable {
    pub opcodes: Vec<OpcodeRecord>,
    pub constants: GasConstants,
}

pub(crate) fn parse_table(src: &str) -> Result<OpcodeTable, String> {
    let table: OpcodeTable = toml::from_str(src).map_err(|e| e.to_string())?;
    let mut seen = [false; 256];
    for rec in &table.opcodes {
        if std::mem::replace(&mut seen[rec.byte as usize], true) {
            return Err(format!("duplicate opcode record for 0x{:02x}", rec.byte));
        }
        if rec.immediate_len > 32 {
            return Err(format!("{}: immediate_len {} > 32", rec.mnemonic, rec.immediate_len));
        }
        if rec.pops > 17 || rec.pushes > 17 {
            return Err(format!("{}: stack arity out of range", rec.mnemonic));
        }
        if !rec.args.is_empty() && rec.args.len() != rec.pops as usize {
            return Err(format!("{}: {} args for {} pops", rec.mnemonic, rec.args.len(), rec.pops));
        }
    }
    Ok(table)
}

pub(crate) static TABLE: Lazy<OpcodeTable> =
    Lazy::new(|| parse_table(TABLE_SOURCE).expect("embedded opcode table is malformed"));

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_table_parses() {
        assert_eq!(TABLE.opcodes.len(), 142);
    }

    #[test]
    fn duplicate_bytes_rejected() {
        let src = r#"
opcodes = [
  { byte = 0x00, mnemonic = "STOP", pops = 0, pushes = 0, fork = "frontier", static_gas = 0, dynamic = "none", handler = "op_stop", paths = ["SUCCESS"] },
  { byte = 0x00, mnemonic = "STOP2", pops = 0, pushes = 0, fork = "frontier", static_gas = 0, dynamic = "none", handler = "op_stop", paths = ["SUCCESS"] },
]
[constants]
memory_word = 3
memory_quad_divisor = 512
copy_word = 3
keccak_word = 6
exp_byte = 50
warm_access = 100
cold_account_access = 2600
cold_sload = 2100
sstore_set = 20000
sstore_reset = 2900
sstore_stipend = 2300
log_topic = 375
log_data = 8
initcode_word = 2
value_transfer = 9000
new_account = 25000
selfdestruct_new_account = 25000
stack_limit = 1024
"#;
        assert!(parse_table(src).unwrap_err().contains("duplicate"));
    }
}
