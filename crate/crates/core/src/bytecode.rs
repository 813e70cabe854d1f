//! EVM bytecode model: opcode lookup, assembly, disassembly and JUMPDEST
//! analysis.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::TABLE;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BytecodeError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("{mnemonic} expects {expected} immediate bytes, got {actual}")]
    ImmediateLengthMismatch {
        mnemonic: String,
        expected: usize,
        actual: usize,
    },
    #[error("unknown fork `{0}`")]
    UnknownFork(String),
    #[error("invalid hex program: {0}")]
    InvalidHex(String),
    #[error("line {line}: {reason}")]
    Listing { line: usize, reason: String },
}

/// Protocol upgrade tags, in activation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum Fork {
    Frontier,
    Homestead,
    Byzantium,
    Constantinople,
    Istanbul,
    Berlin,
    London,
    Paris,
    Shanghai,
    #[default]
    Cancun,
}

impl Fork {
    pub const ALL: [Fork; 10] = [
        Fork::Frontier,
        Fork::Homestead,
        Fork::Byzantium,
        Fork::Constantinople,
        Fork::Istanbul,
        Fork::Berlin,
        Fork::London,
        Fork::Paris,
        Fork::Shanghai,
        Fork::Cancun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fork::Frontier => "frontier",
            Fork::Homestead => "homestead",
            Fork::Byzantium => "byzantium",
            Fork::Constantinople => "constantinople",
            Fork::Istanbul => "istanbul",
            Fork::Berlin => "berlin",
            Fork::London => "london",
            Fork::Paris => "paris",
            Fork::Shanghai => "shanghai",
            Fork::Cancun => "cancun",
        }
    }
}


impl fmt::Display for Fork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fork {
    type Err = BytecodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Fork::ALL
            .iter()
            .copied()
            .find(|f| f.name() == lower)
            .ok_or_else(|| BytecodeError::UnknownFork(s.to_string()))
    }
}

/// Static description of one opcode byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpInfo {
    pub byte: u8,
    pub mnemonic: &'static str,
    /// Operand bytes following the opcode (1..=32 for PUSH1..PUSH32).
    pub immediate_len: u8,
    pub pops: u8,
    pub pushes: u8,
    pub introduced: Fork,
    /// False for bytes with no table record; they execute as INVALID.
    pub defined: bool,
}

impl OpInfo {
    pub fn is_push(&self) -> bool {
        self.immediate_len > 0
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.byte, 0x00 | 0xf3 | 0xfd | 0xfe | 0xff) || !self.defined
    }
}

struct Registry {
    by_byte: Vec<OpInfo>,
}

static REGISTRY: Lazy<Registry> = Lazy::new(|| {
    let mut by_byte: Vec<OpInfo> = (0..=255u8)
        .map(|b| OpInfo {
            byte: b,
            mnemonic: Box::leak(format!("UNKNOWN_{b:02X}").into_boxed_str()),
            immediate_len: 0,
            pops: 0,
            pushes: 0,
            introduced: Fork::Frontier,
            defined: false,
        })
        .collect();
    for rec in &TABLE.opcodes {
        by_byte[rec.byte as usize] = OpInfo {
            byte: rec.byte,
            mnemonic: Box::leak(rec.mnemonic.clone().into_boxed_str()),
            immediate_len: rec.immediate_len,
            pops: rec.pops,
            pushes: rec.pushes,
            introduced: rec.fork,
            defined: true,
        };
    }
    Registry { by_byte }
});

/// Fork-independent decode entry for `byte`; undefined bytes get an
/// INVALID-class record.
pub fn op(byte: u8) -> &'static OpInfo {
    &REGISTRY.by_byte[byte as usize]
}

/// Fork-gated lookup: `None` when `byte` is not part of the instruction set
/// active at `fork`.
pub fn opcode_info(byte: u8, fork: Fork) -> Option<&'static OpInfo> {
    let info = op(byte);
    (info.defined && info.introduced <= fork).then_some(info)
}

/// Same as [`opcode_info`] with the fork given by its tag.
pub fn opcode_info_by_tag(byte: u8, fork: &str) -> Result<Option<&'static OpInfo>, BytecodeError> {
    Ok(opcode_info(byte, fork.parse()?))
}

pub fn op_by_mnemonic(mnemonic: &str) -> Option<&'static OpInfo> {
    let upper = mnemonic.trim().to_ascii_uppercase();
    let upper = match upper.as_str() {
        "SHA3" => "KECCAK256".to_string(),
        "DIFFICULTY" => "PREVRANDAO".to_string(),
        _ => upper,
    };
    REGISTRY.by_byte.iter().find(|o| o.mnemonic == upper)
}

/// Every opcode with a table record, ordered by byte.
pub fn defined_opcodes() -> impl Iterator<Item = &'static OpInfo> {
    REGISTRY.by_byte.iter().filter(|o| o.defined)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub offset: usize,
    pub op: &'static OpInfo,
    /// Byte range of the immediate inside the program.
    pub immediate: Range<usize>,
    /// The immediate runs past the end of the code.
    pub truncated: bool,
}

impl Instruction {
    pub fn next_offset(&self) -> usize {
        self.offset + 1 + self.op.immediate_len as usize
    }
}

/// A decoded byte sequence. Decoding is total: any byte string is a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BytecodeProgram {
    bytes: Vec<u8>,
    instrs: Vec<Instruction>,
    jumpdests: BTreeSet<usize>,
}

impl BytecodeProgram {
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn instrs(&self) -> &[Instruction] {
        &self.instrs
    }

    pub fn jumpdests(&self) -> &BTreeSet<usize> {
        &self.jumpdests
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn immediate(&self, instr: &Instruction) -> &[u8] {
        &self.bytes[instr.immediate.clone()]
    }

    pub fn has_truncated_immediate(&self) -> bool {
        self.instrs.last().is_some_and(|i| i.truncated)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self, BytecodeError> {
        Ok(disassemble(&parse_hex(s)?))
    }

    /// `(mnemonic, immediate)` pairs, the input shape of [`assemble`].
    pub fn listing(&self) -> Vec<(String, Option<Vec<u8>>)> {
        self.instrs
            .iter()
            .map(|i| {
                let imm = i.op.is_push().then(|| self.immediate(i).to_vec());
                (i.op.mnemonic.to_string(), imm)
            })
            .collect()
    }

    /// Text listing, one `MNEMONIC [0xIMMEDIATE]` per line.
    pub fn to_listing(&self) -> String {
        let mut out = String::new();
        for i in &self.instrs {
            out.push_str(i.op.mnemonic);
            if i.op.is_push() {
                out.push_str(" 0x");
                out.push_str(&hex::encode(self.immediate(i)));
            }
            out.push('\n');
        }
        out
    }

    /// Mnemonics on one line, `PUSH1 0x03 JUMP` style.
    pub fn mnemonics(&self) -> String {
        self.to_listing().trim_end().replace('\n', " ")
    }
}

/// Parses the corpus hex format. Tolerates surrounding whitespace and an
/// optional `0x` prefix.
pub fn parse_hex(s: &str) -> Result<Vec<u8>, BytecodeError> {
    let t = s.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    if !t.len().is_multiple_of(2) {
        return Err(BytecodeError::InvalidHex(format!("odd length {}", t.len())));
    }
    hex::decode(t).map_err(|e| BytecodeError::InvalidHex(e.to_string()))
}

/// Single left-to-right decode.
pub fn disassemble(bytes: &[u8]) -> BytecodeProgram {
    let mut instrs = Vec::new();
    let mut jumpdests = BTreeSet::new();
    let mut pc = 0;
    while pc < bytes.len() {
        let info = op(bytes[pc]);
        let start = pc + 1;
        let want = start + info.immediate_len as usize;
        let end = want.min(bytes.len());
        if info.byte == 0x5b {
            jumpdests.insert(pc);
        }
        instrs.push(Instruction {
            offset: pc,
            op: info,
            immediate: start..end,
            truncated: want > bytes.len(),
        });
        pc = end;
    }
    BytecodeProgram {
        bytes: bytes.to_vec(),
        instrs,
        jumpdests,
    }
}

pub fn valid_jump_targets(program: &BytecodeProgram) -> &BTreeSet<usize> {
    &program.jumpdests
}

pub fn assemble<S: AsRef<str>>(
    listing: &[(S, Option<Vec<u8>>)],
) -> Result<BytecodeProgram, BytecodeError> {
    let mut bytes = Vec::new();
    for (mnemonic, imm) in listing {
        let info = op_by_mnemonic(mnemonic.as_ref())
            .or_else(|| unknown_byte(mnemonic.as_ref()))
            .ok_or_else(|| BytecodeError::UnknownMnemonic(mnemonic.as_ref().to_string()))?;
        let got = imm.as_ref().map_or(0, Vec::len);
        if got != info.immediate_len as usize {
            return Err(BytecodeError::ImmediateLengthMismatch {
                mnemonic: info.mnemonic.to_string(),
                expected: info.immediate_len as usize,
                actual: got,
            });
        }
        bytes.push(info.byte);
        if let Some(imm) = imm {
            bytes.extend_from_slice(imm);
        }
    }
    Ok(disassemble(&bytes))
}

fn unknown_byte(mnemonic: &str) -> Option<&'static OpInfo> {
    let hexpart = mnemonic.trim().to_ascii_uppercase();
    let hexpart = hexpart.strip_prefix("UNKNOWN_")?;
    let b = u8::from_str_radix(hexpart, 16).ok()?;
    let info = op(b);
    (!info.defined).then_some(info)
}

/// Parses the text listing format produced by [`BytecodeProgram::to_listing`].
/// Blank lines and `#` comments are skipped.
pub fn parse_listing(text: &str) -> Result<BytecodeProgram, BytecodeError> {
    let mut items: Vec<(String, Option<Vec<u8>>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mnemonic = parts.next().unwrap_or_default().to_string();
        let imm = match parts.next() {
            Some(tok) => Some(parse_hex(tok).map_err(|e| BytecodeError::Listing {
                line: idx + 1,
                reason: e.to_string(),
            })?),
            None => None,
        };
        if parts.next().is_some() {
            return Err(BytecodeError::Listing {
                line: idx + 1,
                reason: "trailing tokens".into(),
            });
        }
        items.push((mnemonic, imm));
    }
    assemble(&items)
}
