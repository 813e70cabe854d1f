//! Catalog of deliberately injected interpreter faults.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Phase of opcode handling a fault lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "stack handling implementation")]
    Stack,
    #[serde(rename = "gas handling implementation")]
    Gas,
    #[serde(rename = "operation execution implementation")]
    Operation,
    #[serde(rename = "program counter handling implementation")]
    ProgramCounter,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Stack => "stack handling implementation",
            Phase::Gas => "gas handling implementation",
            Phase::Operation => "operation execution implementation",
            Phase::ProgramCounter => "program counter handling implementation",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Phase::Stack => "stack",
            Phase::Gas => "gas",
            Phase::Operation => "operation",
            Phase::ProgramCounter => "pc",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
}

impl FaultId {
    pub const ALL: [FaultId; 8] =
        [FaultId::F1, FaultId::F2, FaultId::F3, FaultId::F4, FaultId::F5, FaultId::F6, FaultId::F7, FaultId::F8];

    pub fn spec(self) -> &'static FaultSpec {
        &CATALOG[self as usize]
    }
}

impl fmt::Display for FaultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", *self as usize + 1)
    }
}

impl FromStr for FaultId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultId::ALL
            .iter()
            .copied()
            .find(|f| f.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fault `{s}`"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FaultSpec {
    pub fault_id: FaultId,
    pub target_opcode: u8,
    pub target_mnemonic: &'static str,
    /// Handler name the mutant uses in place of the reference one.
    pub handler: &'static str,
    pub phase: Phase,
    pub description: &'static str,
}

pub static CATALOG: [FaultSpec; 8] = [
    FaultSpec {
        fault_id: FaultId::F1,
        target_opcode: 0x0a,
        target_mnemonic: "EXP",
        handler: "op_exp_unreduced",
        phase: Phase::Operation,
        description: "EXP result is not reduced modulo 2^256; overflowing powers saturate",
    },
    FaultSpec {
        fault_id: FaultId::F2,
        target_opcode: 0x56,
        target_mnemonic: "JUMP",
        handler: "op_jump_unchecked",
        phase: Phase::ProgramCounter,
        description: "JUMP skips the JUMPDEST validity check",
    },
    FaultSpec {
        fault_id: FaultId::F3,
        target_opcode: 0x31,
        target_mnemonic: "BALANCE",
        handler: "op_balance_flat",
        phase: Phase::Gas,
        description: "BALANCE always charges the warm access cost",
    },
    FaultSpec {
        fault_id: FaultId::F4,
        target_opcode: 0x60,
        target_mnemonic: "PUSH1",
        handler: "op_push1_skip",
        phase: Phase::ProgramCounter,
        description: "PUSH1 advances the program counter one byte too far",
    },
    FaultSpec {
        fault_id: FaultId::F5,
        target_opcode: 0xf5,
        target_mnemonic: "CREATE2",
        handler: "op_create2_swapped",
        phase: Phase::Operation,
        description: "CREATE2 reads the value and salt operands in swapped order",
    },
    FaultSpec {
        fault_id: FaultId::F6,
        target_opcode: 0xff,
        target_mnemonic: "SELFDESTRUCT",
        handler: "op_selfdestruct_broken",
        phase: Phase::Operation,
        description: "SELFDESTRUCT dispatch reads a missing instruction attribute and crashes",
    },
    FaultSpec {
        fault_id: FaultId::F7,
        target_opcode: 0x44,
        target_mnemonic: "PREVRANDAO",
        handler: "op_prevrandao_unbound",
        phase: Phase::Operation,
        description: "PREVRANDAO has no handler bound in the active instruction set",
    },
    FaultSpec {
        fault_id: FaultId::F8,
        target_opcode: 0x59,
        target_mnemonic: "MSIZE",
        handler: "op_msize_unrounded",
        phase: Phase::Operation,
        description: "MSIZE reports the highest touched byte instead of the word-rounded size",
    },
];

pub fn inject_fault(fault_id: &str) -> Result<FaultId, String> {
    fault_id.parse()
}
