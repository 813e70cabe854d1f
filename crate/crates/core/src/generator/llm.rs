//! Pluggable code-generation adapters with offline fixtures and a
//! deterministic fallback.

use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::bytecode::{disassemble, parse_hex, BytecodeProgram};
use crate::engine::context::ExecContext;
use crate::generator::control_flow::{mutate_control_flow, Candidate};
use crate::generator::seed::Seed;
use crate::generator::GeneratorError;
use crate::opspec::OpSpec;
use crate::types::content_key;

/// Largest deployable program accepted from an adapter.
pub const MAX_CANDIDATE_LEN: usize = 24576;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LlmRequest {
    pub op_name: String,
    pub seed: String,
    pub seed_mnemonics: String,
    #[serde(rename = "ICFG")]
    pub icfg: String,
}

impl LlmRequest {
    pub fn new(seed: &Seed, spec: &OpSpec) -> Self {
        LlmRequest {
            op_name: spec.mnemonic().to_string(),
            seed: seed.program.to_hex(),
            seed_mnemonics: seed.program.mnemonics(),
            icfg: spec.render_path_model(),
        }
    }

    /// Content key of the canonical request JSON; fixture file stem.
    pub fn hash(&self) -> String {
        content_key(serde_json::to_string(self).expect("request serializes").as_bytes())
    }
}

/// Recorded exchange stored as `<request hash>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmFixture {
    pub request: LlmRequest,
    /// Raw response text: a comma-separated list of hex programs.
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmAdapter {
    FixtureReplay { dir: PathBuf },
    DeterministicFallback,
    /// Command receiving the request JSON on stdin and printing the response.
    External { argv: Vec<String> },
}

impl LlmAdapter {
    pub fn name(&self) -> &'static str {
        match self {
            LlmAdapter::FixtureReplay { .. } => "fixture",
            LlmAdapter::DeterministicFallback => "fallback",
            LlmAdapter::External { .. } => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmOutcome {
    pub candidates: Vec<Candidate>,
    /// Response entries dropped by validation.
    pub invalid: usize,
    /// Adapter that actually produced the candidates.
    pub provenance: String,
}

/// Splits a comma-separated response into program strings.
pub fn parse_response(text: &str) -> Vec<String> {
    text.split([',', '\n'])
        .map(|s| s.trim().trim_matches(|c| c == '[' || c == ']' || c == '"' || c == '\'').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Highest stack depth along the straight-line decode, ignoring jumps.
fn linear_max_depth(p: &BytecodeProgram) -> usize {
    let mut depth: isize = 0;
    let mut max = 0isize;
    for i in p.instrs() {
        depth = (depth - i.op.pops as isize).max(0) + i.op.pushes as isize;
        max = max.max(depth);
    }
    max as usize
}

/// Validates one response entry.
pub fn validate_candidate(text: &str) -> Result<BytecodeProgram, String> {
    let bytes = parse_hex(text).map_err(|e| e.to_string())?;
    if bytes.is_empty() || bytes.len() > MAX_CANDIDATE_LEN {
        return Err(format!("length {} outside [1, {MAX_CANDIDATE_LEN}]", bytes.len()));
    }
    let p = disassemble(&bytes);
    if p.has_truncated_immediate() {
        return Err("truncated PUSH immediate".into());
    }
    let depth = linear_max_depth(&p);
    if depth > 1025 {
        return Err(format!("stack depth {depth} exceeds limit"));
    }
    Ok(p)
}

fn to_candidates(seed: &Seed, entries: &[String], provenance: &str) -> (Vec<Candidate>, usize) {
    let mut out = Vec::new();
    let mut invalid = 0;
    for e in entries {
        match validate_candidate(e) {
            Ok(program) => {
                let target_pc = program
                    .instrs()
                    .iter()
                    .find(|i| i.op.byte == seed.opcode)
                    .map(|i| i.offset)
                    .unwrap_or(usize::MAX);
                out.push(Candidate {
                    opcode: seed.opcode,
                    program,
                    target: None,
                    gas_limit: None,
                    static_flag: false,
                    target_pc,
                    origin: provenance.to_string(),
                });
            }
            Err(reason) => {
                log::debug!("dropping {provenance} candidate `{e}`: {reason}");
                invalid += 1;
            }
        }
    }
    (out, invalid)
}

fn run_external(argv: &[String], request: &LlmRequest) -> Result<String, GeneratorError> {
    use std::io::Write;
    let (cmd, args) = argv.split_first().ok_or_else(|| GeneratorError::AdapterUnavailable("empty argv".into()))?;
    let mut child = Command::new(cmd)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| GeneratorError::AdapterUnavailable(format!("{cmd}: {e}")))?;
    let body = serde_json::to_string(request).expect("request serializes");
    child
        .stdin
        .take()
        .expect("piped stdin")
        .write_all(body.as_bytes())
        .map_err(|e| GeneratorError::AdapterUnavailable(e.to_string()))?;
    let out = child.wait_with_output().map_err(|e| GeneratorError::AdapterUnavailable(e.to_string()))?;
    if !out.status.success() {
        return Err(GeneratorError::AdapterUnavailable(format!("exited with {}", out.status)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Asks the adapter for path-covering variants of `seed`. A fixture adapter
/// with no recording for this request falls back to the deterministic
/// construction.
pub fn llm_generate(
    request: &LlmRequest,
    seed: &Seed,
    spec: &OpSpec,
    ctx: &ExecContext,
    adapter: &LlmAdapter,
) -> Result<LlmOutcome, GeneratorError> {
    let fallback = || LlmOutcome {
        candidates: mutate_control_flow(seed, spec, ctx).candidates,
        invalid: 0,
        provenance: LlmAdapter::DeterministicFallback.name().to_string(),
    };
    match adapter {
        LlmAdapter::DeterministicFallback => Ok(fallback()),
        LlmAdapter::FixtureReplay { dir } => {
            let path = dir.join(format!("{}.json", request.hash()));
            let Ok(text) = std::fs::read_to_string(&path) else {
                return Ok(fallback());
            };
            let fixture: LlmFixture = serde_json::from_str(&text)
                .map_err(|e| GeneratorError::Fixture(format!("{}: {e}", path.display())))?;
            let (candidates, invalid) = to_candidates(seed, &parse_response(&fixture.response), adapter.name());
            Ok(LlmOutcome { candidates, invalid, provenance: adapter.name().to_string() })
        }
        LlmAdapter::External { argv } => {
            let text = run_external(argv, request)?;
            let (candidates, invalid) = to_candidates(seed, &parse_response(&text), adapter.name());
            Ok(LlmOutcome { candidates, invalid, provenance: adapter.name().to_string() })
        }
    }
}
