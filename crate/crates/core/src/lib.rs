//! Opcode-level differential testing for EVM implementations.
//!
//! The pipeline: [`generator`] builds path-targeted programs per opcode,
//! [`engine`] executes them under a shared context on several engines,
//! [`differ`] compares the resulting step traces, [`rootcause`] localizes
//! each divergence and [`campaign`] orchestrates the whole run.

pub mod bytecode;
pub mod campaign;
pub mod differ;
pub mod engine;
pub mod generator;
pub mod opspec;
pub mod rootcause;
mod table;
pub mod types;
