//! Adapter that runs an external engine as a subprocess and parses its
//! JSON-lines trace.
//!
//! Context delivery protocol: the program is written as a lowercase hex file
//! and the [`ExecContext`] as a JSON file into a fresh working directory. The
//! argv template may reference `{code}` (hex file path), `{code_hex}` (the hex
//! inline), `{context}` (context file path) and `{workdir}`. The engine must
//! print one trace in the JSON-lines dialect on stdout.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bytecode::BytecodeProgram;
use crate::engine::context::ExecContext;
use crate::engine::trace::{parse_jsonl, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDialect {
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub name: String,
    pub argv: Vec<String>,
    #[serde(default = "default_dialect")]
    pub dialect: TraceDialect,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_dialect() -> TraceDialect {
    TraceDialect::Jsonl
}

fn default_timeout() -> u64 {
    10_000
}

fn capture_excerpt(raw: &str) -> String {
    const LIMIT: usize = 2048;
    if raw.len() <= LIMIT {
        raw.to_string()
    } else {
        let mut end = LIMIT;
        while !raw.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &raw[..end])
    }
}

/// Runs the configured command. Every failure becomes an `ENGINE_ERROR`
/// trace so comparisons stay total.
pub fn run_external(config: &AdapterConfig, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
    match try_run(config, program, ctx) {
        Ok(stdout) => match parse_jsonl(&stdout) {
            Ok(t) => t,
            Err(e) => Trace::engine_error(format!("trace parse error: {e}; raw: {}", capture_excerpt(&stdout))),
        },
        Err(e) => Trace::engine_error(e),
    }
}

fn try_run(config: &AdapterConfig, program: &BytecodeProgram, ctx: &ExecContext) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| format!("spawn failure: workdir: {e}"))?;
    let code_path = dir.path().join("code.hex");
    let ctx_path = dir.path().join("context.json");
    std::fs::write(&code_path, program.to_hex()).map_err(|e| format!("spawn failure: {e}"))?;
    std::fs::write(&ctx_path, ctx.to_json()).map_err(|e| format!("spawn failure: {e}"))?;
    let hex = program.to_hex();
    let argv: Vec<String> = config
        .argv
        .iter()
        .map(|a| {
            a.replace("{code_hex}", &hex)
                .replace("{code}", &code_path.to_string_lossy())
                .replace("{context}", &ctx_path.to_string_lossy())
                .replace("{workdir}", &dir.path().to_string_lossy())
        })
        .collect();
    let (cmd, args) = argv.split_first().ok_or("spawn failure: empty argv template")?;
    let mut child = Command::new(cmd)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("spawn failure: {cmd}: {e}"))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    let deadline = Instant::now() + Duration::from_millis(config.timeout_ms);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("engine `{}` timed out after {} ms", config.name, config.timeout_ms));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(format!("wait failed: {e}")),
        }
    };
    let out = reader
        .join()
        .map_err(|_| "stdout reader panicked".to_string())?
        .map_err(|e| format!("reading stdout: {e}"))?;
    if !status.success() {
        let mut err = String::new();
        if let Some(mut e) = child.stderr.take() {
            let _ = e.read_to_string(&mut err);
        }
        return Err(format!("engine `{}` exited with {status}: {}", config.name, capture_excerpt(err.trim())));
    }
    Ok(out)
}
