//! Spec-path coverage, classified by the reference interpreter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bytecode::{op, Fork};
use crate::engine::{HaltReason, Trace};
use crate::opspec::{spec_for, PathId};

/// How the reference run treated the instruction at the target offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    Path(PathId),
    NotReached,
    /// Halted at the target for a reason the spec has no path for.
    Unexpected(HaltReason),
}

fn halt_path(h: HaltReason) -> Option<PathId> {
    match h {
        HaltReason::Success | HaltReason::Revert => Some(PathId::Success),
        HaltReason::OutOfGas => Some(PathId::OutOfGas),
        HaltReason::StackUnderflow => Some(PathId::StackUnderflow),
        HaltReason::StackOverflow => Some(PathId::StackOverflow),
        HaltReason::InvalidJumpdest => Some(PathId::InvalidJumpdest),
        HaltReason::InvalidOpcode => Some(PathId::InvalidOpcode),
        HaltReason::WriteInStatic => Some(PathId::WriteInStatic),
        HaltReason::EngineError => None,
    }
}

/// Path taken at `target_pc`: the halt reason if execution stopped on that
/// instruction, SUCCESS if it ran and execution moved on.
pub fn classify(reference: &Trace, target_pc: usize) -> Classification {
    let Some(last) = reference.steps.last() else {
        return Classification::NotReached;
    };
    if last.pc == target_pc {
        return match halt_path(reference.halt()) {
            Some(p) => Classification::Path(p),
            None => Classification::Unexpected(reference.halt()),
        };
    }
    if reference.steps.iter().any(|s| s.pc == target_pc) {
        Classification::Path(PathId::Success)
    } else {
        Classification::NotReached
    }
}

/// Reference classification of one executed program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusResult {
    pub opcode: u8,
    pub target: Option<PathId>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeCoverage {
    pub opcode: String,
    pub mnemonic: String,
    pub paths: BTreeMap<PathId, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Miss {
    pub opcode: String,
    pub mnemonic: String,
    pub path: PathId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub per_opcode: Vec<OpcodeCoverage>,
    pub total_paths: usize,
    pub hit_paths: usize,
    pub fraction: f64,
    pub misses: Vec<Miss>,
}

/// Counts hits per (opcode, path) over `opcodes`. `notes` holds known
/// reasons for paths no candidate was built for.
pub fn path_coverage(
    results: &[CorpusResult],
    opcodes: &[u8],
    fork: Fork,
    notes: &BTreeMap<(u8, PathId), String>,
) -> CoverageStats {
    let mut hits: BTreeMap<u8, BTreeMap<PathId, u64>> = BTreeMap::new();
    // Per (opcode, targeted path): what the reference did instead.
    let mut outcomes: BTreeMap<(u8, PathId), BTreeMap<String, u64>> = BTreeMap::new();
    for r in results {
        if let Classification::Path(p) = r.classification {
            *hits.entry(r.opcode).or_default().entry(p).or_default() += 1;
        }
        if let Some(t) = r.target {
            let seen = match r.classification {
                Classification::Path(p) => p.to_string(),
                Classification::NotReached => "not reached".to_string(),
                Classification::Unexpected(h) => format!("halted {h}"),
            };
            *outcomes.entry((r.opcode, t)).or_default().entry(seen).or_default() += 1;
        }
    }
    let mut per_opcode = Vec::new();
    let mut misses = Vec::new();
    let (mut total, mut hit) = (0, 0);
    let mut sorted = opcodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for byte in sorted {
        let Ok(spec) = spec_for(byte, fork) else { continue };
        let got = hits.get(&byte);
        let mut paths = BTreeMap::new();
        for path in &spec.paths {
            let n = got.and_then(|m| m.get(&path.path_id)).copied().unwrap_or(0);
            paths.insert(path.path_id, n);
            total += 1;
            if n > 0 {
                hit += 1;
                continue;
            }
            let reason = if let Some(note) = notes.get(&(byte, path.path_id)) {
                note.clone()
            } else if let Some(o) = outcomes.get(&(byte, path.path_id)) {
                let parts: Vec<String> = o.iter().map(|(k, v)| format!("{k} x{v}")).collect();
                format!("targeted, but the reference run gave: {}", parts.join(", "))
            } else {
                "no candidate targeted this path".to_string()
            };
            log::info!("coverage miss: {} {}: {reason}", op(byte).mnemonic, path.path_id);
            misses.push(Miss {
                opcode: format!("0x{byte:02x}"),
                mnemonic: op(byte).mnemonic.to_string(),
                path: path.path_id,
                reason,
            });
        }
        per_opcode.push(OpcodeCoverage { opcode: format!("0x{byte:02x}"), mnemonic: op(byte).mnemonic.to_string(), paths });
    }
    let fraction = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
    CoverageStats { per_opcode, total_paths: total, hit_paths: hit, fraction, misses }
}
