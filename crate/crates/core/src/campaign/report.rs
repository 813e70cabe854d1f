//! Bug reports and their JSON and Markdown renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::coverage::CoverageStats;
use crate::differ::Divergence;
use crate::rootcause::RootCause;
use crate::types::content_key;

/// One report is emitted per key per campaign.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DedupKey {
    pub opcode: u8,
    pub op_name: String,
    pub phase: String,
    pub engines: (String, String),
}

impl DedupKey {
    pub fn key(&self) -> String {
        content_key(format!("{:02x}|{}|{}|{}", self.opcode, self.phase, self.engines.0, self.engines.1).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reproduction {
    pub program_hex: String,
    pub mnemonics: String,
    pub context_seed: u64,
    pub context_key: String,
    pub gas_limit: u64,
    pub static_call: bool,
    pub engines: Vec<String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub dedup_key: DedupKey,
    pub divergence: Divergence,
    pub root_cause: RootCause,
    pub reproduction: Reproduction,
    /// Further confirmed divergences that mapped to the same key.
    pub duplicates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub rng_seed: u64,
    pub engines: Vec<String>,
    pub baseline: String,
    pub opcodes: usize,
    pub programs: usize,
    pub executions: usize,
    pub divergences: usize,
    pub confirmed: usize,
    pub quarantined: usize,
    pub reports: usize,
    pub invalid_candidates: usize,
    pub coverage: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub summary: CampaignSummary,
    pub reports: Vec<BugReport>,
    pub coverage: CoverageStats,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o failure on {0}: {1}")]
    IoFailure(PathBuf, std::io::Error),
    #[error("cannot parse {0}: {1}")]
    Parse(PathBuf, serde_json::Error),
}

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|e| ReportError::IoFailure(path.to_path_buf(), e))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

pub fn render_markdown(doc: &ReportDocument) -> String {
    let s = &doc.summary;
    let mut md = String::new();
    let _ = writeln!(md, "# Differential campaign report\n");
    let _ = writeln!(md, "| | |\n|---|---|");
    let _ = writeln!(md, "| master seed | {} |", s.rng_seed);
    let _ = writeln!(md, "| baseline | `{}` |", s.baseline);
    let _ = writeln!(md, "| engines | {} |", s.engines.iter().map(|e| format!("`{e}`")).collect::<Vec<_>>().join(", "));
    let _ = writeln!(md, "| opcodes | {} |", s.opcodes);
    let _ = writeln!(md, "| programs executed | {} |", s.programs);
    let _ = writeln!(md, "| confirmed divergences | {} |", s.confirmed);
    let _ = writeln!(md, "| quarantined | {} |", s.quarantined);
    let _ = writeln!(md, "| reports | {} |", s.reports);
    let _ = writeln!(md);
    let _ = writeln!(md, "## Reports\n");
    if doc.reports.is_empty() {
        let _ = writeln!(md, "No confirmed divergences.\n");
    }
    for (i, r) in doc.reports.iter().enumerate() {
        let rc = &r.root_cause;
        let d = &r.divergence;
        let _ = writeln!(md, "### {}. {} / {} (`{}` vs `{}`)\n", i + 1, rc.op_name, r.dedup_key.phase, d.engines.0, d.engines.1);
        let _ = writeln!(md, "- key: `{}`", r.dedup_key.key());
        let _ = writeln!(md, "- opcode: `0x{:02x}` {}", rc.opcode, rc.op_name);
        let causes: Vec<&str> = rc.cause.iter().map(|p| p.as_str()).collect();
        let _ = writeln!(md, "- cause: {}", if causes.is_empty() { "non-execution stage".to_string() } else { causes.join(", ") });
        let _ = writeln!(md, "- function: `{}`", rc.func);
        let _ = writeln!(md, "- metric: {} at step {} ({:?})", d.metric, d.step_index, d.field_detail.field);
        let _ = writeln!(md, "  - `{}`: {}", d.engines.0, d.field_detail.a);
        let _ = writeln!(md, "  - `{}`: {}", d.engines.1, d.field_detail.b);
        let _ = writeln!(md, "- first disagreement: step {} on {:?}", rc.evidence.step_index, rc.evidence.fields);
        let _ = writeln!(md, "- duplicates: {}", r.duplicates);
        let rep = &r.reproduction;
        let _ = writeln!(md, "\nReproduction:\n");
        let _ = writeln!(md, "1. program `{}`", rep.program_hex);
        let _ = writeln!(md, "   ```\n   {}\n   ```", rep.mnemonics);
        let _ = writeln!(
            md,
            "2. context seed {} (key `{}`), gas limit {}, static {}",
            rep.context_seed, rep.context_key, rep.gas_limit, rep.static_call
        );
        let _ = writeln!(md, "3. run on {}", rep.engines.iter().map(|e| format!("`{e}`")).collect::<Vec<_>>().join(" and "));
        let _ = writeln!(md);
    }
    let c = &doc.coverage;
    let _ = writeln!(md, "## Coverage\n");
    let _ = writeln!(md, "{} of {} (opcode, path) pairs hit ({:.2}%).\n", c.hit_paths, c.total_paths, c.fraction * 100.0);
    if !c.misses.is_empty() {
        let _ = writeln!(md, "| opcode | path | reason |\n|---|---|---|");
        for m in &c.misses {
            let _ = writeln!(md, "| {} | {} | {} |", m.mnemonic, m.path, m.reason);
        }
        let _ = writeln!(md);
    }
    md
}

/// Writes `report.json`, `report.md`, `coverage.json`, `summary.json` and
/// one `reports/<key>.json` per report. Existing per-report files are kept.
pub fn emit_report(out: &Path, doc: &ReportDocument) -> Result<(), ReportError> {
    let dir = out.join("reports");
    std::fs::create_dir_all(&dir).map_err(|e| ReportError::IoFailure(dir.clone(), e))?;
    write(&out.join("report.json"), &to_json(doc))?;
    write(&out.join("report.md"), &render_markdown(doc))?;
    write(&out.join("coverage.json"), &to_json(&doc.coverage))?;
    write(&out.join("summary.json"), &to_json(&doc.summary))?;
    for r in &doc.reports {
        let path = dir.join(format!("{}.json", r.dedup_key.key()));
        if !path.exists() {
            write(&path, &to_json(r))?;
        }
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<ReportDocument, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::IoFailure(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Parse(path.to_path_buf(), e))
}
