//! Seed programs: one opcode with its operands pushed, plus whatever memory
//! setup it needs.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bytecode::{assemble, BytecodeProgram, Fork};
use crate::engine::context::KNOWN_ADDRESSES;
use crate::generator::GeneratorError;
use crate::opspec::{spec_for, OpSpec, OperandKind, PathId};
use crate::types::Word;

/// One operand slot of a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    /// Pushed with a `PUSH<width>`.
    Value { value: Word, width: u8 },
    /// Resolved at layout time to the offset of the landing-pad JUMPDEST.
    LandingPad,
    /// Resolved to a fixed offset that is not a valid jump target.
    Offset(usize),
}

impl Operand {
    pub fn word(value: Word) -> Self {
        let width = (value.byte_len().max(1)) as u8;
        Operand::Value { value, width }
    }
}

/// Structured form of a seed from which variants are re-rendered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedLayout {
    pub setup: Vec<(String, Option<Vec<u8>>)>,
    /// Extra items pushed before the operands (overflow fillers).
    pub fillers: usize,
    /// Operands, top of stack first.
    pub operands: Vec<Operand>,
    pub opcode: u8,
    /// Immediate bytes when the target is a PUSH.
    pub target_immediate: Option<Vec<u8>>,
    /// Instructions after the target opcode.
    pub tail: Vec<(String, Option<Vec<u8>>)>,
    pub landing_pad: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub program: BytecodeProgram,
    pub target_pc: usize,
    /// Byte range holding the operand pushes.
    pub operand_range: Range<usize>,
}

fn push_for(value: Word, width: u8) -> (String, Option<Vec<u8>>) {
    let bytes = value.to_be_bytes::<32>();
    let w = width as usize;
    (format!("PUSH{w}"), Some(bytes[32 - w..].to_vec()))
}

fn instr_len(i: &(String, Option<Vec<u8>>)) -> usize {
    1 + i.1.as_ref().map_or(0, |v| v.len())
}

impl SeedLayout {
    pub fn render(&self) -> Rendered {
        // Jump operands use PUSH2 so offsets are known before layout.
        let operand_len: usize = self
            .operands
            .iter()
            .map(|o| match o {
                Operand::Value { width, .. } => 1 + *width as usize,
                _ => 3,
            })
            .sum();
        let setup_len: usize = self.setup.iter().map(instr_len).sum();
        let start = setup_len + self.fillers;
        let target_pc = start + operand_len;
        let tail_len: usize = self.tail.iter().map(instr_len).sum();
        let target_len = 1 + self.target_immediate.as_ref().map_or(0, |v| v.len());
        let pad = target_pc + target_len + tail_len;
        let mut listing = self.setup.clone();
        listing.extend(std::iter::repeat_n(("PUSH0".to_string(), None), self.fillers));
        for o in self.operands.iter().rev() {
            listing.push(match o {
                Operand::Value { value, width } => push_for(*value, *width),
                Operand::LandingPad => push_for(Word::from(pad), 2),
                Operand::Offset(off) => push_for(Word::from(*off), 2),
            });
        }
        listing.push((crate::bytecode::op(self.opcode).mnemonic.to_string(), self.target_immediate.clone()));
        listing.extend(self.tail.iter().cloned());
        if self.landing_pad {
            listing.push(("JUMPDEST".into(), None));
            listing.push(("STOP".into(), None));
        }
        let program = assemble(&listing).expect("seed layouts only use table mnemonics");
        Rendered { program, target_pc, operand_range: start..target_pc }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seed {
    pub opcode: u8,
    pub program: BytecodeProgram,
    pub intended_path: PathId,
    pub rng_seed: u64,
    pub target_pc: usize,
    pub operand_range: Range<usize>,
    pub layout: SeedLayout,
}

impl Seed {
    pub fn spec(&self, fork: Fork) -> &'static OpSpec {
        spec_for(self.opcode, fork).expect("seed opcode is defined")
    }
}

fn random_word<R: Rng>(rng: &mut R) -> Operand {
    let width = match rng.gen_range(0..4) {
        0 => 1,
        1 => 2,
        2 => rng.gen_range(1..=32),
        _ => 32,
    };
    let mut bytes = [0u8; 32];
    rng.fill(&mut bytes[32 - width as usize..]);
    Operand::Value { value: Word::from_be_bytes(bytes), width }
}

fn small<R: Rng>(rng: &mut R, range: Range<u64>) -> Operand {
    Operand::Value { value: Word::from(rng.gen_range(range)), width: 1 }
}

fn operand_for<R: Rng>(kind: OperandKind, rng: &mut R) -> Operand {
    match kind {
        OperandKind::Word => random_word(rng),
        OperandKind::ByteIndex => small(rng, 0..40),
        OperandKind::Shift => Operand::Value { value: Word::from(rng.gen_range(0u64..300)), width: 2 },
        OperandKind::MemOffset | OperandKind::MemSize | OperandKind::DataOffset => small(rng, 0..65),
        OperandKind::Address => {
            if rng.gen_bool(0.5) {
                let a = KNOWN_ADDRESSES[rng.gen_range(0..KNOWN_ADDRESSES.len())];
                Operand::word(a.to_word())
            } else {
                let mut bytes = [0u8; 32];
                rng.fill(&mut bytes[12..]);
                Operand::Value { value: Word::from_be_bytes(bytes), width: 20 }
            }
        }
        OperandKind::Slot => small(rng, 0..8),
        OperandKind::BlockNumber => random_word(rng),
        OperandKind::JumpDest => Operand::LandingPad,
        OperandKind::Condition => small(rng, 1..256),
        OperandKind::Value => {
            if rng.gen_bool(0.5) {
                small(rng, 0..1)
            } else {
                small(rng, 1..101)
            }
        }
        OperandKind::Gas => Operand::Value { value: Word::from(rng.gen_range(0u64..100_000)), width: 3 },
        OperandKind::InitcodeSize => {
            if rng.gen_bool(0.5) {
                small(rng, 0..1)
            } else {
                small(rng, 1..65)
            }
        }
    }
}

fn setup_for<R: Rng>(spec: &OpSpec, rng: &mut R) -> Vec<(String, Option<Vec<u8>>)> {
    if spec.opcode.byte == 0x59 {
        // Unaligned byte write so the word-rounded size differs from the
        // touched extent.
        return vec![
            ("PUSH1".into(), Some(vec![rng.gen()])),
            ("PUSH1".into(), Some(vec![rng.gen_range(0..64)])),
            ("MSTORE8".into(), None),
        ];
    }
    if !spec.mem_setup {
        return Vec::new();
    }
    let mut word = vec![0u8; 32];
    rng.fill(&mut word[..]);
    vec![("PUSH32".into(), Some(word)), ("PUSH1".into(), Some(vec![0])), ("MSTORE".into(), None)]
}

/// Builds the SUCCESS seed for `opcode`.
pub fn build_seed(opcode: u8, fork: Fork, rng_seed: u64) -> Result<Seed, GeneratorError> {
    let spec = spec_for(opcode, fork).map_err(|_| GeneratorError::UnsupportedOpcode(opcode))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ ((opcode as u64) << 56));
    let setup = setup_for(spec, &mut rng);
    let operands: Vec<Operand> = spec.operand_kinds().into_iter().map(|k| operand_for(k, &mut rng)).collect();
    let terminal = spec.opcode.is_terminal();
    let imm_len = spec.opcode.immediate_len as usize;
    let target_immediate = (imm_len > 0).then(|| (0..imm_len).map(|_| rng.gen()).collect());
    let layout = SeedLayout {
        target_immediate,
        setup,
        fillers: 0,
        landing_pad: operands.iter().any(|o| matches!(o, Operand::LandingPad)),
        operands,
        opcode,
        tail: if terminal { Vec::new() } else { vec![("STOP".into(), None)] },
    };
    let r = layout.render();
    Ok(Seed {
        opcode,
        program: r.program,
        intended_path: PathId::Success,
        rng_seed,
        target_pc: r.target_pc,
        operand_range: r.operand_range,
        layout,
    })
}
