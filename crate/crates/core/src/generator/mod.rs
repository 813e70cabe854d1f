//! Test program generation: seeds, path-targeted control-flow variants,
//! operand mutation and code-generation adapters.

pub mod arguments;
pub mod control_flow;
pub mod corpus;
pub mod llm;
pub mod seed;

use thiserror::Error;

pub use arguments::{mutate_arguments, MutationConfig};
pub use control_flow::{mutate_control_flow, Candidate, ControlFlowOutput, SkippedPath};
pub use corpus::{CorpusDir, CorpusMeta};
pub use llm::{llm_generate, LlmAdapter, LlmFixture, LlmOutcome, LlmRequest};
pub use seed::{build_seed, Seed};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("opcode 0x{0:02x} is not in the implemented subset")]
    UnsupportedOpcode(u8),
    #[error("invalid mutation config: {0}")]
    InvalidConfig(String),
    #[error("code generation adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("bad fixture: {0}")]
    Fixture(String),
}
