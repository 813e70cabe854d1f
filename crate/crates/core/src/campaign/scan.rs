//! How often a set of opcodes appears in a body of deployed code.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bytecode::{disassemble, parse_hex, BytecodeProgram};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractImpact {
    pub name: String,
    pub instructions: u64,
    pub buggy: u64,
    pub affected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub total_opcodes: u64,
    pub buggy_opcodes: u64,
    /// `buggy_opcodes / total_opcodes`, 0 for an empty corpus.
    pub rate: f64,
    pub affected_contracts: u64,
    pub contracts: Vec<ContractImpact>,
    /// Files that could not be decoded.
    pub skipped: Vec<String>,
}

impl ScanResult {
    pub fn percent(&self) -> String {
        format!("{:.2}%", self.rate * 100.0)
    }
}

/// Counts decoded instructions (PUSH immediates excluded) and those whose
/// opcode is in `buggy`.
pub fn scan_corpus_impact(corpus: &[(String, BytecodeProgram)], buggy: &BTreeSet<u8>) -> ScanResult {
    let mut contracts = Vec::with_capacity(corpus.len());
    let (mut total, mut bad) = (0u64, 0u64);
    for (name, p) in corpus {
        let n = p.instrs().len() as u64;
        let b = p.instrs().iter().filter(|i| buggy.contains(&i.op.byte)).count() as u64;
        total += n;
        bad += b;
        contracts.push(ContractImpact { name: name.clone(), instructions: n, buggy: b, affected: b > 0 });
    }
    ScanResult {
        total_opcodes: total,
        buggy_opcodes: bad,
        rate: if total == 0 { 0.0 } else { bad as f64 / total as f64 },
        affected_contracts: contracts.iter().filter(|c| c.affected).count() as u64,
        contracts,
        skipped: Vec::new(),
    }
}

/// Scans every `*.hex` file under `dir` in name order; files that fail to
/// decode are logged and listed in `skipped`.
pub fn scan_dir(dir: &Path, buggy: &BTreeSet<u8>) -> std::io::Result<ScanResult> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hex"))
        .collect();
    paths.sort();
    let mut corpus = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| parse_hex(t.trim()).map_err(|e| e.to_string())) {
            Ok(bytes) => corpus.push((name, disassemble(&bytes))),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(name);
            }
        }
    }
    let mut result = scan_corpus_impact(&corpus, buggy);
    result.skipped = skipped;
    Ok(result)
}
