//! Path-targeted variants of a seed: one or more candidates per spec path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bytecode::BytecodeProgram;
use crate::engine::context::{ExecContext, AMPLE_GAS};
use crate::engine::interpreter::Interpreter;
use crate::generator::seed::{Operand, Seed, SeedLayout};
use crate::opspec::{OpSpec, OperandKind, PathId};
use crate::types::Word;

/// A program aimed at one spec path of one opcode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub opcode: u8,
    pub program: BytecodeProgram,
    /// `None` for externally generated programs with no declared target.
    pub target: Option<PathId>,
    /// Transaction gas limit to run with; `None` keeps the context's.
    pub gas_limit: Option<u64>,
    pub static_flag: bool,
    pub target_pc: usize,
    /// How the candidate was derived.
    pub origin: String,
}

impl Candidate {
    /// The context this candidate is meant to run under.
    pub fn context(&self, base: &ExecContext) -> ExecContext {
        let mut ctx = base.clone();
        if let Some(g) = self.gas_limit {
            ctx.tx.gas_limit = g;
        }
        ctx.tx.static_flag = self.static_flag;
        ctx
    }
}

/// A path no candidate could be built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPath {
    pub opcode: u8,
    pub path: PathId,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlFlowOutput {
    pub candidates: Vec<Candidate>,
    pub skipped: Vec<SkippedPath>,
}

fn from_layout(seed: &Seed, layout: &SeedLayout, target: PathId, origin: &str) -> Candidate {
    let r = layout.render();
    Candidate {
        opcode: seed.opcode,
        program: r.program,
        target: Some(target),
        gas_limit: None,
        static_flag: false,
        target_pc: r.target_pc,
        origin: origin.to_string(),
    }
}

/// Variant that makes the opcode's effect visible in the return data.
fn observed_layout(spec: &OpSpec, seed: &Seed) -> Option<SeedLayout> {
    if spec.opcode.is_terminal() || seed.layout.landing_pad {
        return None;
    }
    let p = |m: &str, imm: Option<u8>| (m.to_string(), imm.map(|b| vec![b]));
    let tail = if spec.opcode.pushes > 0 {
        vec![p("PUSH1", Some(0)), p("MSTORE", None), p("PUSH1", Some(0x20)), p("PUSH1", Some(0)), p("RETURN", None)]
    } else if spec.mem_setup || matches!(spec.opcode.byte, 0x37 | 0x39 | 0x52 | 0x53 | 0x5e) {
        vec![p("MSIZE", None), p("PUSH1", Some(0)), p("RETURN", None)]
    } else {
        return None;
    };
    let mut layout = seed.layout.clone();
    layout.tail = tail;
    Some(layout)
}

/// Builds candidates for every path of `spec`. `ctx` is the context the
/// candidates will run under; OUT_OF_GAS limits are derived by probing the
/// reference interpreter with it.
pub fn mutate_control_flow(seed: &Seed, spec: &OpSpec, ctx: &ExecContext) -> ControlFlowOutput {
    let mut out = ControlFlowOutput::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rng_seed.rotate_left(17) ^ 0xc0ff);
    let skip = |out: &mut ControlFlowOutput, path: PathId, reason: &str| {
        out.skipped.push(SkippedPath { opcode: seed.opcode, path, reason: reason.to_string() })
    };
    for path in &spec.paths {
        match path.path_id {
            PathId::Success => {
                out.candidates.push(from_layout(seed, &seed.layout, PathId::Success, "seed"));
                if let Some(l) = observed_layout(spec, seed) {
                    out.candidates.push(from_layout(seed, &l, PathId::Success, "observed"));
                }
            }
            PathId::StackUnderflow => {
                let mut l = seed.layout.clone();
                l.operands.clear();
                out.candidates.push(from_layout(seed, &l, PathId::StackUnderflow, "underflow-0"));
                if seed.layout.operands.len() > 1 {
                    let mut l = seed.layout.clone();
                    l.operands.pop();
                    let name = format!("underflow-{}", l.operands.len());
                    out.candidates.push(from_layout(seed, &l, PathId::StackUnderflow, &name));
                }
            }
            PathId::StackOverflow => {
                let pushes = spec.opcode.pushes as usize;
                let pops = spec.opcode.pops as usize;
                if pushes <= pops {
                    skip(&mut out, path.path_id, "opcode never grows the stack");
                    continue;
                }
                let mut l = seed.layout.clone();
                l.fillers = 1025 - pushes;
                out.candidates.push(from_layout(seed, &l, PathId::StackOverflow, "overflow"));
            }
            PathId::OutOfGas => {
                let probe_ctx = ctx.clone().with_gas_limit(AMPLE_GAS).with_static(false);
                let t = Interpreter::reference().run(&seed.program, &probe_ctx);
                match t.steps.iter().find(|s| s.pc == seed.target_pc) {
                    Some(step) if step.gas_cost > 0 => {
                        let consumed = AMPLE_GAS - step.gas;
                        let mut c = from_layout(seed, &seed.layout, PathId::OutOfGas, "gas-boundary");
                        c.gas_limit = Some(consumed + step.gas_cost - 1);
                        out.candidates.push(c);
                    }
                    Some(_) => skip(&mut out, path.path_id, "step costs no gas for this seed"),
                    None => skip(&mut out, path.path_id, "seed does not reach the opcode"),
                }
            }
            PathId::InvalidJumpdest => {
                let mut l = seed.layout.clone();
                let probe = l.render();
                let len = probe.program.len();
                let bad = loop {
                    let off = if rng.gen_bool(0.5) { probe.target_pc } else { rng.gen_range(0..len + 8) };
                    if !probe.program.jumpdests().contains(&off) {
                        break off;
                    }
                };
                for (kind, op) in spec.operand_kinds().iter().zip(l.operands.iter_mut()) {
                    match kind {
                        OperandKind::JumpDest => *op = Operand::Offset(bad),
                        OperandKind::Condition => *op = Operand::word(Word::from(1u64)),
                        _ => {}
                    }
                }
                out.candidates.push(from_layout(seed, &l, PathId::InvalidJumpdest, "bad-target"));
            }
            PathId::WriteInStatic => {
                let mut l = seed.layout.clone();
                for (kind, op) in spec.operand_kinds().iter().zip(l.operands.iter_mut()) {
                    if *kind == OperandKind::Value && spec.opcode.byte == 0xf1 {
                        *op = Operand::word(Word::from(1u64));
                    }
                }
                let mut c = from_layout(seed, &l, PathId::WriteInStatic, "static");
                c.static_flag = true;
                out.candidates.push(c);
            }
            PathId::InvalidOpcode => {
                out.candidates.push(from_layout(seed, &seed.layout, PathId::InvalidOpcode, "seed"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::{op_by_mnemonic, Fork};
    use crate::engine::trace::HaltReason;
    use crate::generator::seed::build_seed;
    use crate::opspec::spec_for;

    fn cands(m: &str, s: u64) -> ControlFlowOutput {
        let byte = op_by_mnemonic(m).unwrap().byte;
        let seed = build_seed(byte, Fork::Cancun, s).unwrap();
        mutate_control_flow(&seed, spec_for(byte, Fork::Cancun).unwrap(), &ExecContext::baseline())
    }

    #[test]
    fn byte_out_of_gas_is_boundary() {
        let out = cands("BYTE", 4);
        let c = out.candidates.iter().find(|c| c.target == Some(PathId::OutOfGas)).unwrap();
        assert_eq!(c.gas_limit, Some(3 + 3 + 3 - 1));
        let t = Interpreter::reference().run(&c.program, &c.context(&ExecContext::baseline()));
        assert_eq!(t.halt(), HaltReason::OutOfGas);
        assert_eq!(t.steps.last().unwrap().pc, c.target_pc);
    }

    #[test]
    fn byte_underflow_drops_pushes() {
        let out = cands("BYTE", 4);
        let c = out.candidates.iter().find(|c| c.origin == "underflow-0").unwrap();
        assert_eq!(c.program.bytes(), &[0x1a, 0x00]);
    }

    #[test]
    fn jump_invalid_target() {
        let out = cands("JUMP", 2);
        let c = out.candidates.iter().find(|c| c.target == Some(PathId::InvalidJumpdest)).unwrap();
        let t = Interpreter::reference().run(&c.program, &ExecContext::baseline());
        assert_eq!(t.halt(), HaltReason::InvalidJumpdest);
    }

    #[test]
    fn every_path_gets_a_candidate_or_a_note() {
        for spec in crate::opspec::all_specs(Fork::Cancun) {
            let seed = build_seed(spec.opcode.byte, Fork::Cancun, 11).unwrap();
            let out = mutate_control_flow(&seed, spec, &ExecContext::baseline());
            for p in &spec.paths {
                let hit = out.candidates.iter().any(|c| c.target == Some(p.path_id));
                let noted = out.skipped.iter().any(|s| s.path == p.path_id);
                assert!(hit || noted, "{} {}", spec.mnemonic(), p.path_id);
            }
        }
    }
}
