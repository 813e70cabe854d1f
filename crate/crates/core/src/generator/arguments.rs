//! Argument-oriented mutation of PUSH operands.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bytecode::{disassemble, BytecodeProgram};
use crate::generator::GeneratorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Probability of a boundary operand (half all-zero, half all-0xFF).
    pub p: f64,
    /// Number of mutation rounds.
    pub t: usize,
    pub rng_seed: u64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig { p: 0.3, t: 64, rng_seed: 0 }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(0.0..=1.0).contains(&self.p) || self.p.is_nan() {
            return Err(GeneratorError::InvalidConfig(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Runs `t` rounds over a copy of the program. In each round every PUSH
/// immediate is replaced: with `r` uniform in `[0, 1)`, all zeros when
/// `r < p/2`, all 0xFF when `r < p`, fresh random bytes otherwise. Truncated
/// trailing immediates are left untouched. Returns the distinct outputs in
/// byte order.
pub fn mutate_arguments(program: &BytecodeProgram, config: &MutationConfig) -> Result<Vec<BytecodeProgram>, GeneratorError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut out = BTreeSet::new();
    let slots: Vec<_> = program
        .instrs()
        .iter()
        .filter(|i| !i.immediate.is_empty() && !i.truncated)
        .map(|i| i.immediate.clone())
        .collect();
    for _ in 0..config.t {
        let mut bytes = program.bytes().to_vec();
        for range in &slots {
            let r: f64 = rng.gen();
            let slot = &mut bytes[range.clone()];
            if r < config.p / 2.0 {
                slot.fill(0x00);
            } else if r < config.p {
                slot.fill(0xff);
            } else {
                rng.fill(slot);
            }
        }
        out.insert(bytes);
    }
    Ok(out.into_iter().map(|b| disassemble(&b)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prog(h: &str) -> BytecodeProgram {
        BytecodeProgram::from_hex(h).unwrap()
    }

    #[test]
    fn all_zero_branch() {
        let cfg = MutationConfig { p: 1.0, t: 1, rng_seed: 0 };
        let seed = prog("60aa1a00");
        // Find a seed whose single draw falls in the zero branch.
        let hit = (0..64)
            .map(|s| mutate_arguments(&seed, &MutationConfig { rng_seed: s, ..cfg }).unwrap())
            .find(|o| o[0].bytes() == [0x60, 0x00, 0x1a, 0x00]);
        assert!(hit.is_some());
    }

    #[test]
    fn no_push_no_change() {
        let out = mutate_arguments(&prog("00"), &MutationConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bytes(), &[0x00]);
    }

    #[test]
    fn push_lookalike_immediates_stay_data() {
        // PUSH2 0x6060: the immediate looks like two PUSH1 opcodes.
        let out = mutate_arguments(&prog("6160605600"), &MutationConfig { p: 0.0, t: 50, rng_seed: 3 }).unwrap();
        for p in &out {
            assert_eq!(p.bytes()[0], 0x61);
            assert_eq!(&p.bytes()[3..], &[0x56, 0x00]);
        }
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(mutate_arguments(&prog("00"), &MutationConfig { p: 1.5, t: 1, rng_seed: 0 }).is_err());
    }

    #[test]
    fn at_most_t_outputs() {
        let out = mutate_arguments(&prog("60016002"), &MutationConfig { p: 0.3, t: 10, rng_seed: 1 }).unwrap();
        assert!(out.len() <= 10);
    }
}
