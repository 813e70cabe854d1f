use proptest::prelude::*;

use evmdiff::bytecode::{disassemble, BytecodeProgram};
use evmdiff::differ::compare;
use evmdiff::engine::{make_context, parse_jsonl, ExecContext, FaultId, HaltReason, Interpreter};
use evmdiff::generator::{mutate_arguments, MutationConfig};
use evmdiff::rootcause::blame;

fn code() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..96)
}

/// Mostly well-formed code: random opcodes interleaved with small pushes.
fn program() -> impl Strategy<Value = BytecodeProgram> {
    prop::collection::vec(
        prop_oneof![
            (0x00u8..0x60).prop_map(|b| vec![b]),
            (1u8..=4, any::<[u8; 4]>()).prop_map(|(n, imm)| {
                let mut v = vec![0x5f + n];
                v.extend_from_slice(&imm[..n as usize]);
                v
            }),
            (0x80u8..0xa0).prop_map(|b| vec![b]),
        ],
        0..40,
    )
    .prop_map(|parts| disassemble(&parts.concat()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn disassembly_covers_every_byte(bytes in code()) {
        let p = disassemble(&bytes);
        prop_assert_eq!(p.bytes(), &bytes[..]);
        let mut at = 0;
        for i in p.instrs() {
            prop_assert_eq!(i.offset, at);
            at = i.next_offset().min(bytes.len());
        }
        prop_assert_eq!(at, bytes.len());
        prop_assert_eq!(BytecodeProgram::from_hex(&p.to_hex()).unwrap(), p);
    }

    #[test]
    fn mutation_keeps_shape(p in program(), prob in 0.0f64..=1.0, t in 1usize..12, seed in any::<u64>()) {
        let outs = mutate_arguments(&p, &MutationConfig { p: prob, t, rng_seed: seed }).unwrap();
        prop_assert!(outs.len() <= t);
        for out in outs {
            prop_assert_eq!(out.len(), p.len());
            for (a, b) in p.instrs().iter().zip(out.instrs()) {
                prop_assert_eq!(a.offset, b.offset);
                prop_assert_eq!(a.op.byte, b.op.byte);
            }
        }
    }

    #[test]
    fn jsonl_round_trips(p in program(), seed in any::<u64>()) {
        let t = Interpreter::reference().run(&p, &make_context(seed));
        let text = t.to_jsonl();
        prop_assert_eq!(parse_jsonl(&text).unwrap().to_jsonl(), text);
    }

    #[test]
    fn context_json_round_trips(seed in any::<u64>()) {
        let ctx = make_context(seed);
        prop_assert!(ctx.is_consistent());
        prop_assert_eq!(ExecContext::from_json(&ctx.to_json()).unwrap(), ctx);
    }

    #[test]
    fn reference_agrees_with_itself(p in program(), seed in any::<u64>()) {
        let ctx = make_context(seed);
        let a = Interpreter::reference().run(&p, &ctx);
        let b = Interpreter::reference().run(&p, &ctx);
        prop_assert!(blame(&a, &b).is_none());
        prop_assert!(compare(&[("a".into(), a), ("b".into(), b)], seed).unwrap().is_empty());
    }

    #[test]
    fn divergences_are_symmetric(p in program(), seed in any::<u64>(), f in 0usize..8) {
        let ctx = make_context(seed);
        let a = Interpreter::reference().run(&p, &ctx);
        let b = Interpreter::mutant(FaultId::ALL[f]).run(&p, &ctx);
        let ab = compare(&[("a".into(), a.clone()), ("b".into(), b.clone())], seed).unwrap();
        let ba = compare(&[("b".into(), b), ("a".into(), a)], seed).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(&x.swapped(), y);
        }
    }

    #[test]
    fn successful_runs_spend_what_they_charge(p in program(), seed in any::<u64>()) {
        let ctx = make_context(seed);
        let t = Interpreter::reference().run(&p, &ctx);
        if t.halt() == HaltReason::Success {
            let charged: u64 = t.steps.iter().map(|s| s.gas_cost).sum();
            prop_assert_eq!(t.final_state.gas_used, charged);
        }
        if t.halt().is_exceptional() {
            prop_assert_eq!(t.final_state.gas_used, ctx.tx.gas_limit);
        }
        for w in t.steps.windows(2) {
            prop_assert_eq!(w[1].gas, w[0].gas - w[0].gas_cost);
        }
    }
}
