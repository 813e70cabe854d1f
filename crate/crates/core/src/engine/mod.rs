//! Engines that execute programs under a shared context and emit uniform
//! step traces.

pub mod context;
pub mod external;
pub mod faults;
pub mod interpreter;
pub mod trace;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use thiserror::Error;

use crate::bytecode::BytecodeProgram;
use crate::types::content_key;

pub use context::{make_context, Account, ExecContext};
pub use external::{run_external, AdapterConfig};
pub use faults::{inject_fault, FaultId, FaultSpec, Phase, CATALOG};
pub use interpreter::Interpreter;
pub use trace::{parse_jsonl, FinalState, HaltReason, Provenance, StepRecord, StorageDelta, Trace};

pub const REFERENCE: &str = "reference";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error("unknown fault `{0}`")]
    UnknownFault(String),
    #[error("engine `{0}` failed the smoke program: {1}")]
    Unhealthy(String, String),
}

pub trait Engine: Send + Sync {
    fn id(&self) -> &str;

    fn run(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace;

    /// Handler name per opcode, when the engine knows its own layout.
    fn handler_for(&self, _opcode: u8) -> Option<String> {
        None
    }
}

/// Reference or mutant interpreter.
#[derive(Debug, Clone)]
pub struct BuiltinEngine {
    id: String,
    interpreter: Interpreter,
}

impl BuiltinEngine {
    pub fn reference() -> Self {
        BuiltinEngine { id: REFERENCE.into(), interpreter: Interpreter::reference() }
    }

    pub fn mutant(fault: FaultId) -> Self {
        BuiltinEngine { id: format!("mutant:{fault}"), interpreter: Interpreter::mutant(fault) }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn interpreter(&self) -> Interpreter {
        self.interpreter
    }
}

impl Engine for BuiltinEngine {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
        self.interpreter.run(program, ctx)
    }

    fn handler_for(&self, opcode: u8) -> Option<String> {
        if let Some(f) = self.interpreter.fault {
            if f.spec().target_opcode == opcode {
                return Some(f.spec().handler.to_string());
            }
        }
        crate::opspec::spec_for(opcode, crate::bytecode::Fork::Cancun).ok().map(|s| s.handler.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ExternalEngine {
    id: String,
    config: AdapterConfig,
}

impl ExternalEngine {
    pub fn new(config: AdapterConfig) -> Self {
        ExternalEngine { id: format!("external:{}", config.name), config }
    }
}

impl Engine for ExternalEngine {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
        run_external(&self.config, program, ctx)
    }
}

/// Resolves an engine id: `reference`, `mutant:F1`..`mutant:F8`, or
/// `external:<name>` naming one of `adapters`.
pub fn engine_from_id(id: &str, adapters: &BTreeMap<String, AdapterConfig>) -> Result<Arc<dyn Engine>, EngineError> {
    if id == REFERENCE {
        return Ok(Arc::new(BuiltinEngine::reference()));
    }
    if let Some(f) = id.strip_prefix("mutant:") {
        let fault = inject_fault(f).map_err(|_| EngineError::UnknownFault(f.to_string()))?;
        return Ok(Arc::new(BuiltinEngine::mutant(fault)));
    }
    if let Some(name) = id.strip_prefix("external:") {
        let cfg = adapters.get(name).ok_or_else(|| EngineError::UnknownEngine(id.to_string()))?;
        return Ok(Arc::new(ExternalEngine::new(cfg.clone())));
    }
    Err(EngineError::UnknownEngine(id.to_string()))
}

pub fn program_key(program: &BytecodeProgram) -> String {
    content_key(program.to_hex().as_bytes())
}

/// Runs an engine, converting panics into `ENGINE_ERROR` traces and stamping
/// provenance.
pub fn execute(engine: &dyn Engine, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
    let mut trace = catch_unwind(AssertUnwindSafe(|| engine.run(program, ctx))).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".to_string());
        Trace::engine_error(format!("engine crashed: {msg}"))
    });
    trace.provenance = Some(Provenance { program_key: program_key(program), context_key: ctx.key(), fork: ctx.fork });
    trace
}

/// Pre-flight check: the engine must run the one-byte program `00` cleanly.
pub fn smoke_test(engine: &dyn Engine) -> Result<(), EngineError> {
    let program = BytecodeProgram::from_hex("00").expect("static program");
    let t = execute(engine, &program, &ExecContext::baseline());
    if t.halt() == HaltReason::Success {
        Ok(())
    } else {
        let halt = t.halt();
        Err(EngineError::Unhealthy(
            engine.id().to_string(),
            t.final_state.detail.unwrap_or_else(|| halt.to_string()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Panicky;

    impl Engine for Panicky {
        fn id(&self) -> &str {
            "panicky"
        }

        fn run(&self, _: &BytecodeProgram, _: &ExecContext) -> Trace {
            panic!("boom")
        }
    }

    #[test]
    fn panics_become_engine_errors() {
        let p = BytecodeProgram::from_hex("00").unwrap();
        let t = execute(&Panicky, &p, &ExecContext::baseline());
        assert_eq!(t.halt(), HaltReason::EngineError);
        assert!(t.final_state.detail.unwrap().contains("boom"));
        assert!(smoke_test(&Panicky).is_err());
    }

    #[test]
    fn registry() {
        let none = BTreeMap::new();
        assert_eq!(engine_from_id("reference", &none).unwrap().id(), "reference");
        assert_eq!(engine_from_id("mutant:F2", &none).unwrap().id(), "mutant:F2");
        assert!(matches!(engine_from_id("mutant:F9", &none), Err(EngineError::UnknownFault(_))));
        assert!(matches!(engine_from_id("external:x", &none), Err(EngineError::UnknownEngine(_))));
        for f in FaultId::ALL {
            smoke_test(&BuiltinEngine::mutant(f)).unwrap();
        }
    }

    #[test]
    fn deterministic_and_stamped() {
        let p = BytecodeProgram::from_hex("6001600201600055").unwrap();
        let ctx = make_context(3);
        let e = BuiltinEngine::reference();
        let a = execute(&e, &p, &ctx);
        let b = execute(&e, &p, &ctx);
        assert_eq!(a, b);
        assert_eq!(a.provenance.unwrap().program_key, program_key(&p));
    }

    #[test]
    fn static_handler_names() {
        assert_eq!(BuiltinEngine::reference().handler_for(0x0a).unwrap(), "op_exp");
        assert_eq!(BuiltinEngine::mutant(FaultId::F1).handler_for(0x0a).unwrap(), "op_exp_unreduced");
        assert_eq!(BuiltinEngine::mutant(FaultId::F1).handler_for(0x01).unwrap(), "op_add");
    }
}
