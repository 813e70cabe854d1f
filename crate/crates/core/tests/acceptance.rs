//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evmdiff::bytecode::{disassemble, op, op_by_mnemonic, BytecodeProgram, Fork};
use evmdiff::campaign::{run_campaign, scan_corpus_impact, scan_dir, CampaignConfig, CampaignOutcome};
use evmdiff::differ::compare;
use evmdiff::engine::context::{ALICE, CALLEE};
use evmdiff::engine::{
    execute, inject_fault, make_context, run_external, AdapterConfig, BuiltinEngine, ExecContext, HaltReason,
    Interpreter, CATALOG,
};
use evmdiff::generator::{build_seed, mutate_arguments, MutationConfig};
use evmdiff::opspec::{all_specs, gas_cost, spec_for};
use evmdiff::types::Word;

type Check = Result<String, String>;

fn catalog_config(out: &Path, seed: u64) -> CampaignConfig {
    CampaignConfig {
        opcodes: Some(CATALOG.iter().map(|f| f.target_opcode).collect()),
        rng_seed: seed,
        out_dir: out.to_path_buf(),
        ..CampaignConfig::default()
    }
}

// ---------------------------------------------------------------- 1

fn c1_catalog(outcome: &CampaignOutcome) -> Check {
    let reports = &outcome.reports;
    if reports.len() != CATALOG.len() {
        let got: Vec<String> = reports.iter().map(|r| format!("{}/{}", r.root_cause.op_name, r.dedup_key.phase)).collect();
        return Err(format!("expected {} reports, got {}: {got:?}", CATALOG.len(), reports.len()));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        let engine = &r.dedup_key.engines.1;
        let fault = engine
            .strip_prefix("mutant:")
            .and_then(|f| inject_fault(f).ok())
            .ok_or_else(|| format!("report blames non-mutant engine {engine}"))?;
        let spec = fault.spec();
        if r.root_cause.opcode != spec.target_opcode {
            return Err(format!("{fault}: blamed {} instead of {}", r.root_cause.op_name, spec.target_mnemonic));
        }
        if r.root_cause.cause != BTreeSet::from([spec.phase]) {
            return Err(format!("{fault}: phase {} instead of {}", r.dedup_key.phase, spec.phase.short()));
        }
        seen.insert(fault);
    }
    if seen.len() != CATALOG.len() {
        return Err(format!("only {} distinct faults reported", seen.len()));
    }
    Ok(format!("{} reports, each naming its fault's opcode and phase", reports.len()))
}

// ---------------------------------------------------------------- 2

fn random_program(rng: &mut ChaCha8Rng) -> BytecodeProgram {
    let n = rng.gen_range(1..48);
    let mut bytes = Vec::new();
    for _ in 0..n {
        if rng.gen_bool(0.4) {
            let len = rng.gen_range(0..=32u8);
            bytes.push(0x5f + len);
            bytes.extend((0..len).map(|_| rng.gen::<u8>()));
        } else {
            bytes.push(rng.gen());
        }
    }
    disassemble(&bytes)
}

/// Upper 1% point of chi-square with `df` degrees of freedom
/// (Wilson-Hilferty).
fn chi2_critical_99(df: f64) -> f64 {
    let z = 2.326_347_874;
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

fn c2_mutation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut outputs = 0usize;
    for case in 0..1000 {
        let program = random_program(&mut rng);
        let p = if case % 10 == 0 { 1.0 } else { rng.gen_range(0.0..=1.0) };
        let config = MutationConfig { p, t: rng.gen_range(1..16), rng_seed: rng.next_u64() };
        let outs = mutate_arguments(&program, &config).map_err(|e| e.to_string())?;
        if outs.len() > config.t {
            return Err(format!("case {case}: {} outputs for t={}", outs.len(), config.t));
        }
        let mut fixed = vec![true; program.len()];
        for i in program.instrs() {
            if !i.truncated {
                for b in i.immediate.clone() {
                    fixed[b] = false;
                }
            }
        }
        for out in &outs {
            outputs += 1;
            if out.len() != program.len() {
                return Err(format!("case {case}: length {} -> {}", program.len(), out.len()));
            }
            for (k, (&a, &b)) in program.bytes().iter().zip(out.bytes()).enumerate() {
                if fixed[k] && a != b {
                    return Err(format!("case {case}: non-immediate byte {k} changed"));
                }
            }
            if p == 1.0 {
                for i in out.instrs().iter().filter(|i| i.op.is_push() && !i.truncated && i.op.immediate_len > 0) {
                    let imm = out.immediate(i);
                    if !(imm.iter().all(|&x| x == 0) || imm.iter().all(|&x| x == 0xff)) {
                        return Err(format!("case {case}: p=1 produced immediate {}", hex::encode(imm)));
                    }
                }
            }
        }
    }
    // p = 0: immediates should be uniform bytes.
    let mut counts = [0u64; 256];
    let program = disassemble(&[[0x7fu8].as_slice(), &[0u8; 32]].concat().repeat(8));
    for s in 0..16 {
        let outs = mutate_arguments(&program, &MutationConfig { p: 0.0, t: 50, rng_seed: 1000 + s })
            .map_err(|e| e.to_string())?;
        for out in outs {
            for i in out.instrs() {
                for &b in out.immediate(i) {
                    counts[b as usize] += 1;
                }
            }
        }
    }
    let n: u64 = counts.iter().sum();
    let expect = n as f64 / 256.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let crit = chi2_critical_99(255.0);
    if chi2 > crit {
        return Err(format!("p=0 chi-square {chi2:.1} exceeds {crit:.1} over {n} bytes"));
    }
    Ok(format!("1000 configs, {outputs} outputs; p=0 chi-square {chi2:.1} < {crit:.1} over {n} bytes"))
}

// ---------------------------------------------------------------- 3

fn c3_coverage(outcome: &CampaignOutcome) -> Check {
    let c = &outcome.coverage;
    for m in &c.misses {
        println!("    miss: {} {}: {}", m.mnemonic, m.path, m.reason);
        if m.reason.trim().is_empty() {
            return Err(format!("{} {} missed without a reason", m.mnemonic, m.path));
        }
    }
    let detail = format!("{}/{} paths ({:.2}%), {} programs", c.hit_paths, c.total_paths, c.fraction * 100.0, outcome.summary.programs);
    if c.fraction >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 4

fn modulus() -> BigUint {
    BigUint::one() << 256
}

fn big(w: &Word) -> BigUint {
    BigUint::from_bytes_be(&w.to_be_bytes::<32>())
}

fn word(b: &BigUint) -> Word {
    let bytes = (b % modulus()).to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(&bytes);
    Word::from_be_bytes(out)
}

fn negative(a: &BigUint) -> bool {
    a.bit(255)
}

/// Magnitude of a two's-complement word.
fn magnitude(a: &BigUint) -> BigUint {
    if negative(a) {
        modulus() - a
    } else {
        a.clone()
    }
}

fn negate(a: &BigUint) -> BigUint {
    if a.is_zero() {
        BigUint::zero()
    } else {
        modulus() - a
    }
}

fn low_u64(a: &BigUint) -> u64 {
    a.to_u64_digits().first().copied().unwrap_or(0)
}

fn flag(b: bool) -> BigUint {
    if b {
        BigUint::one()
    } else {
        BigUint::zero()
    }
}

fn signed_lt(a: &BigUint, b: &BigUint) -> bool {
    match (negative(a), negative(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => a < b,
    }
}

/// Arbitrary-precision model of each arithmetic opcode; `x[0]` is the top
/// of the stack.
fn oracle(name: &str, x: &[BigUint]) -> BigUint {
    let m = modulus();
    let ones = &m - 1u32;
    let a = &x[0];
    let b = || &x[1];
    match name {
        "ADD" => (a + b()) % &m,
        "MUL" => (a * b()) % &m,
        "SUB" => (a + &m - b()) % &m,
        "DIV" => if b().is_zero() { BigUint::zero() } else { a / b() },
        "MOD" => if b().is_zero() { BigUint::zero() } else { a % b() },
        "SDIV" => {
            if b().is_zero() {
                return BigUint::zero();
            }
            let q = magnitude(a) / magnitude(b());
            if negative(a) != negative(b()) { negate(&q) } else { q % &m }
        }
        "SMOD" => {
            if b().is_zero() {
                return BigUint::zero();
            }
            let r = magnitude(a) % magnitude(b());
            if negative(a) { negate(&r) } else { r }
        }
        "ADDMOD" => if x[2].is_zero() { BigUint::zero() } else { (a + b()) % &x[2] },
        "MULMOD" => if x[2].is_zero() { BigUint::zero() } else { (a * b()) % &x[2] },
        "EXP" => a.modpow(b(), &m),
        "SIGNEXTEND" => {
            if *a >= BigUint::from(31u32) {
                return b().clone();
            }
            let bits = 8 * (low_u64(a) + 1);
            let low = (BigUint::one() << bits) - 1u32;
            if b().bit(bits - 1) {
                b() | (&ones ^ &low)
            } else {
                b() & low
            }
        }
        "LT" => flag(a < b()),
        "GT" => flag(a > b()),
        "SLT" => flag(signed_lt(a, b())),
        "SGT" => flag(signed_lt(b(), a)),
        "EQ" => flag(a == b()),
        "ISZERO" => flag(a.is_zero()),
        "AND" => a & b(),
        "OR" => a | b(),
        "XOR" => a ^ b(),
        "NOT" => &ones ^ a,
        "BYTE" => {
            if *a >= BigUint::from(32u32) {
                return BigUint::zero();
            }
            let i = low_u64(a);
            (b() >> (8 * (31 - i))) & BigUint::from(0xffu32)
        }
        "SHL" => if *a >= BigUint::from(256u32) { BigUint::zero() } else { (b() << low_u64(a)) % &m },
        "SHR" => if *a >= BigUint::from(256u32) { BigUint::zero() } else { b() >> low_u64(a) },
        "SAR" => {
            let neg = negative(b());
            if *a >= BigUint::from(256u32) {
                return if neg { ones } else { BigUint::zero() };
            }
            let s = low_u64(a);
            if neg {
                // floor(-v / 2^s) for v = |b|, i.e. -(((v - 1) >> s) + 1)
                negate(&(((magnitude(b()) - 1u32) >> s) + 1u32))
            } else {
                b() >> s
            }
        }
        other => panic!("no oracle for {other}"),
    }
}

const ARITH: [&str; 25] = [
    "ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "ADDMOD", "MULMOD", "EXP", "SIGNEXTEND", "LT", "GT", "SLT", "SGT",
    "EQ", "ISZERO", "AND", "OR", "XOR", "NOT", "BYTE", "SHL", "SHR", "SAR",
];

struct Runner {
    interp: Interpreter,
    ctx: ExecContext,
}

impl Runner {
    /// Result left on the stack by `opcode` applied to `args` (top first).
    fn eval(&self, opcode: u8, args: &[Word]) -> Result<Word, String> {
        let mut code = Vec::with_capacity(34 * args.len() + 2);
        for a in args.iter().rev() {
            code.push(0x7f);
            code.extend_from_slice(&a.to_be_bytes::<32>());
        }
        code.extend([opcode, 0x00]);
        let t = self.interp.run(&disassemble(&code), &self.ctx);
        match (t.halt(), t.steps.last()) {
            (HaltReason::Success, Some(s)) if s.stack.len() == 1 => Ok(s.stack[0]),
            (h, _) => Err(format!("{} halted {h}", op(opcode).mnemonic)),
        }
    }
}

fn check_case(r: &Runner, name: &str, byte: u8, args: &[Word]) -> Result<(), String> {
    let got = r.eval(byte, args)?;
    let bigs: Vec<BigUint> = args.iter().map(big).collect();
    let want = word(&oracle(name, &bigs));
    if got != want {
        return Err(format!("{name}{args:?}: engine {got:#x}, oracle {want:#x}"));
    }
    Ok(())
}

/// 8-bit projections of an operand: the raw byte and its sign extension.
fn projections(v: u8) -> [Word; 2] {
    let low = Word::from(v);
    let ext = if v & 0x80 != 0 { low | (Word::MAX << 8) } else { low };
    [low, ext]
}

fn edge_or_random(rng: &mut ChaCha8Rng) -> Word {
    match rng.gen_range(0..10) {
        0 => Word::ZERO,
        1 => Word::MAX,
        2 => Word::from(1u8) << 255,
        3 => Word::from(rng.gen_range(0..300u32)),
        4 => Word::MAX - Word::from(rng.gen_range(0..300u32)),
        _ => {
            let mut b = [0u8; 32];
            rng.fill(&mut b);
            Word::from_be_bytes(b)
        }
    }
}

fn c4_semantics() -> Check {
    let r = Runner { interp: Interpreter::reference(), ctx: ExecContext::baseline() };
    let mut cases = 0u64;
    // Fixed cases.
    let two = Word::from(2u8);
    if r.eval(0x0a, &[two, Word::from(256u32)])? != Word::ZERO {
        return Err("EXP(2, 256) != 0".into());
    }
    for i in [32u32, 33, 255, 1 << 20] {
        if r.eval(0x1a, &[Word::from(i), Word::MAX])? != Word::ZERO {
            return Err(format!("BYTE({i}, MAX) != 0"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for name in ARITH {
        let info = op_by_mnemonic(name).ok_or_else(|| format!("unknown {name}"))?;
        let arity = info.pops as usize;
        match arity {
            1 => {
                for v in 0..=255u8 {
                    for a in projections(v) {
                        check_case(&r, name, info.byte, &[a])?;
                        cases += 1;
                    }
                }
            }
            2 => {
                for u in 0..=255u8 {
                    for v in 0..=255u8 {
                        for (pa, pb) in [(0, 0), (1, 1), (0, 1), (1, 0)] {
                            check_case(&r, name, info.byte, &[projections(u)[pa], projections(v)[pb]])?;
                            cases += 1;
                        }
                    }
                }
            }
            _ => {
                // a, b over all bytes against a spread of moduli, plus the full 4-bit cube.
                for u in 0..=255u8 {
                    for v in 0..=255u8 {
                        for n in [0u8, 1, 2, 3, 7, 16, 127, 255] {
                            check_case(&r, name, info.byte, &[Word::from(u), Word::from(v), Word::from(n)])?;
                            cases += 1;
                        }
                    }
                }
                for u in 0..16u8 {
                    for v in 0..16u8 {
                        for n in 0..16u8 {
                            let [a, _] = projections(u | if u & 8 != 0 { 0xf0 } else { 0 });
                            check_case(&r, name, info.byte, &[a, Word::from(v), Word::from(n)])?;
                            cases += 1;
                        }
                    }
                }
            }
        }
        for _ in 0..10_000 {
            let args: Vec<Word> = (0..arity).map(|_| edge_or_random(&mut rng)).collect();
            check_case(&r, name, info.byte, &args)?;
            cases += 1;
        }
    }
    Ok(format!("{} opcodes, {cases} cases agree with the big-integer model", ARITH.len()))
}

// ---------------------------------------------------------------- 5

/// Fixed cost of every opcode whose charge has no dynamic part.
fn static_cost(byte: u8) -> Option<u64> {
    Some(match byte {
        0x00 => 0,
        0x01 | 0x03 | 0x10..=0x1d => 3,
        0x02 | 0x04..=0x07 | 0x0b => 5,
        0x08 | 0x09 => 8,
        0x30 | 0x32..=0x34 | 0x36 | 0x38 | 0x3a | 0x3d => 2,
        0x35 => 3,
        0x40 => 20,
        0x41..=0x46 | 0x48 | 0x4a => 2,
        0x47 => 5,
        0x49 => 3,
        0x50 | 0x58 | 0x59 | 0x5a | 0x5f => 2,
        0x56 => 8,
        0x57 => 10,
        0x5b => 1,
        0x5c | 0x5d => 100,
        0x60..=0x9f => 3,
        _ => return None,
    })
}

fn mem_fee(words: u64) -> u64 {
    3 * words + words * words / 512
}

fn c5_gas() -> Check {
    let interp = Interpreter::reference();
    let (mut runs, mut steps, mut fixed, mut memory) = (0u64, 0u64, 0u64, 0u64);
    for spec in all_specs(Fork::Cancun) {
        let byte = spec.opcode.byte;
        for i in 0..1000u64 {
            let s = (byte as u64) << 32 | i;
            let seed = build_seed(byte, Fork::Cancun, s).map_err(|e| e.to_string())?;
            let program = if i % 2 == 0 {
                seed.program
            } else {
                let outs = mutate_arguments(&seed.program, &MutationConfig { p: 0.3, t: 1, rng_seed: s })
                    .map_err(|e| e.to_string())?;
                outs.into_iter().next().unwrap_or(seed.program)
            };
            let ctx = make_context(s);
            let t = interp.run_observed(&program, &ctx);
            runs += 1;
            let observed = t.observed.as_ref().ok_or("run_observed recorded no inputs")?;
            let unpriced = matches!(
                t.halt(),
                HaltReason::StackUnderflow | HaltReason::InvalidOpcode | HaltReason::EngineError
            );
            for (k, step) in t.steps.iter().enumerate() {
                if unpriced && k + 1 == t.steps.len() {
                    continue;
                }
                let sp = spec_for(step.op, Fork::Cancun).map_err(|e| e.to_string())?;
                let want = gas_cost(sp, &observed[k]).map_err(|e| format!("{}: {e}", sp.mnemonic()))?;
                if want != step.gas_cost {
                    return Err(format!(
                        "{} at pc {} in {}: charged {}, rule gives {want}",
                        step.op_name, step.pc, program.to_hex(), step.gas_cost
                    ));
                }
                steps += 1;
                if let Some(c) = static_cost(step.op) {
                    if c != step.gas_cost {
                        return Err(format!("{} charged {}, table says {c}", step.op_name, step.gas_cost));
                    }
                    fixed += 1;
                }
                if matches!(step.op, 0x51..=0x53) {
                    if let Some(next) = t.steps.get(k + 1) {
                        let before = step.mem_size as u64 / 32;
                        let after = next.mem_size as u64 / 32;
                        let c = 3 + mem_fee(after) - mem_fee(before);
                        if c != step.gas_cost {
                            return Err(format!("{} charged {}, memory model says {c}", step.op_name, step.gas_cost));
                        }
                        memory += 1;
                    }
                }
            }
        }
    }
    // Account access: cold then warm, and the executing account is warm.
    let addr = |a: evmdiff::types::Address| {
        let mut code = vec![0x73];
        code.extend_from_slice(&a.0);
        code.push(0x31);
        code
    };
    let code = [addr(ALICE), vec![0x50], addr(ALICE), vec![0x50], addr(CALLEE), vec![0x00]].concat();
    let t = interp.run(&disassemble(&code), &ExecContext::baseline());
    let balance: Vec<u64> = t.steps.iter().filter(|s| s.op == 0x31).map(|s| s.gas_cost).collect();
    if balance != [2600, 100, 100] {
        return Err(format!("BALANCE cold/warm/self charged {balance:?}"));
    }
    Ok(format!(
        "{runs} runs, {steps} steps match the cost rules; {fixed} fixed-cost and {memory} memory checks; BALANCE 2600/100"
    ))
}

// ---------------------------------------------------------------- 6

fn c6_consistency(self_diff: &CampaignOutcome, catalog: &CampaignOutcome) -> Check {
    let s = &self_diff.summary;
    if s.divergences != 0 || !self_diff.reports.is_empty() {
        return Err(format!("reference vs reference: {} divergences over {} programs", s.divergences, s.programs));
    }
    let c = &catalog.summary;
    if c.divergences == 0 || c.confirmed != c.divergences || c.quarantined != 0 {
        return Err(format!("catalog: {} divergences, {} confirmed, {} quarantined", c.divergences, c.confirmed, c.quarantined));
    }
    Ok(format!(
        "self-diff 0/{} programs diverge; catalog {}/{} divergences reproduce",
        s.programs, c.confirmed, c.divergences
    ))
}

// ---------------------------------------------------------------- 7

fn golden_pairs() -> Vec<(&'static str, BytecodeProgram, ExecContext)> {
    let hex = |s: &str| BytecodeProgram::from_hex(s).expect("golden program");
    vec![
        ("arith_return", hex("600260030160005260206000f3"), ExecContext::baseline()),
        (
            "storage_balance",
            hex(&format!("602a60015560015473{}3100", "0".repeat(34) + "0a11ce")),
            make_context(7),
        ),
        ("bad_jump", hex("6005565b00"), make_context(42)),
    ]
}

fn c7_traces() -> Check {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let bless = std::env::var_os("EVMDIFF_BLESS").is_some();
    let reference = BuiltinEngine::reference();
    let adapter = AdapterConfig {
        name: "self".into(),
        argv: ["exec", "--code-file", "{code}", "--context", "{context}"]
            .iter()
            .fold(vec![env!("CARGO_BIN_EXE_evmdiff").to_string()], |mut v, a| {
                v.push(a.to_string());
                v
            }),
        dialect: evmdiff::engine::external::TraceDialect::Jsonl,
        timeout_ms: 30_000,
    };
    for (name, program, ctx) in golden_pairs() {
        let local = execute(&reference, &program, &ctx);
        let text = local.to_jsonl();
        let path = dir.join(format!("{name}.jsonl"));
        if bless {
            std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            std::fs::write(&path, &text).map_err(|e| e.to_string())?;
        }
        let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if golden != text {
            return Err(format!("{name}: trace differs from {}", path.display()));
        }
        let remote = run_external(&adapter, &program, &ctx);
        if remote.to_jsonl() != text {
            return Err(format!("{name}: adapter round trip changed the trace"));
        }
        let ds = compare(&[("reference".into(), local), ("self".into(), remote)], ctx.rng_seed)
            .map_err(|e| e.to_string())?;
        if !ds.is_empty() {
            return Err(format!("{name}: {} divergences through the adapter", ds.len()));
        }
    }
    Ok("3 golden traces byte-identical; adapter round trip lossless".into())
}

// ---------------------------------------------------------------- 8

fn c8_scan() -> Check {
    let tiny = scan_corpus_impact(&[("c".into(), BytecodeProgram::from_hex("600356").unwrap())], &BTreeSet::from([0x56]));
    if tiny.percent() != "50.00%" {
        return Err(format!("600356 with JUMP gives {}", tiny.percent()));
    }
    // 100 contracts, 20 instructions each, EXP planted at 100 of the 2000
    // instruction slots. PUSH immediates are free to contain 0x0a.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut slots: Vec<usize> = (0..2000).collect();
    for i in 0..100 {
        let j = rng.gen_range(i..slots.len());
        slots.swap(i, j);
    }
    let planted: BTreeSet<usize> = slots[..100].iter().copied().collect();
    let fillers = [0x01u8, 0x02, 0x50, 0x56, 0x5b, 0x60, 0x61, 0x7f, 0x80, 0x90, 0x00];
    for c in 0..100 {
        let mut code = Vec::new();
        for k in 0..20 {
            if planted.contains(&(c * 20 + k)) {
                code.push(0x0a);
                continue;
            }
            let b = fillers[rng.gen_range(0..fillers.len())];
            code.push(b);
            if (0x60..=0x7f).contains(&b) {
                code.extend((0..b - 0x5f).map(|_| if rng.gen_bool(0.5) { 0x0a } else { rng.gen() }));
            }
        }
        std::fs::write(dir.path().join(format!("c{c:03}.hex")), hex::encode(code)).map_err(|e| e.to_string())?;
    }
    let r = scan_dir(dir.path(), &BTreeSet::from([0x0a])).map_err(|e| e.to_string())?;
    if (r.total_opcodes, r.buggy_opcodes) != (2000, 100) || r.percent() != "5.00%" {
        return Err(format!("{} of {} instructions flagged, rate {}", r.buggy_opcodes, r.total_opcodes, r.percent()));
    }
    Ok(format!("planted corpus {} ({}/{}); 600356 {}", r.percent(), r.buggy_opcodes, r.total_opcodes, tiny.percent()))
}

// ---------------------------------------------------------------- 9

fn c9_determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let opcodes: Vec<&str> = CATALOG.iter().map(|f| f.target_mnemonic).collect();
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_evmdiff"))
            .stdout(std::process::Stdio::null())
            .args(["run", "--seed", "99", "--opcodes", &opcodes.join(","), "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if status.code() != Some(1) {
            return Err(format!("run {run} exited with {status}"));
        }
        outs.push(out);
    }
    let mut files = vec!["report.json".to_string(), "report.md".into(), "coverage.json".into(), "summary.json".into()];
    for e in std::fs::read_dir(outs[0].join("reports")).map_err(|e| e.to_string())? {
        files.push(format!("reports/{}", e.map_err(|e| e.to_string())?.file_name().to_string_lossy()));
    }
    for f in &files {
        let a = std::fs::read(outs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(outs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok(format!("{} artifacts byte-identical across two runs", files.len()))
}

// ----------------------------------------------------------------

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() {
    let scratch = tempfile::tempdir().expect("tempdir");
    let mut failures = 0;
    let mut report = |n: u8, name: &str, result: Check, took: Duration, limit: Duration| {
        let (ok, detail) = match result {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {limit:?}")),
            Err(e) => (false, e),
        };
        if !ok {
            failures += 1;
        }
        println!("criterion {n} {name}: {} ({detail}) [{:.1}s]", if ok { "PASS" } else { "FAIL" }, took.as_secs_f64());
    };
    let minutes = |m: u64| Duration::from_secs(60 * m);

    let (catalog, t_catalog) = timed(|| run_campaign(&catalog_config(&scratch.path().join("catalog"), 1)));
    let catalog = match catalog {
        Ok(c) => Some(c),
        Err(e) => {
            report(1, "catalog", Err(e.to_string()), t_catalog, minutes(5));
            None
        }
    };
    if let Some(c) = &catalog {
        report(1, "catalog", c1_catalog(c), t_catalog, minutes(5));
    }

    let (r, t) = timed(c2_mutation);
    report(2, "argument mutation", r, t, Duration::from_secs(30));

    let full = CampaignConfig { out_dir: scratch.path().join("full"), ..CampaignConfig::default() };
    let (r, t) = timed(|| run_campaign(&full).map_err(|e| e.to_string()).and_then(|o| c3_coverage(&o)));
    report(3, "path coverage", r, t, minutes(5));

    let (r, t) = timed(c4_semantics);
    report(4, "arithmetic semantics", r, t, minutes(2));

    let (r, t) = timed(c5_gas);
    report(5, "gas accounting", r, t, minutes(1));

    let self_cfg = CampaignConfig {
        engines: vec!["reference".into(), "reference".into()],
        out_dir: scratch.path().join("self"),
        ..CampaignConfig::default()
    };
    let (r, t) = timed(|| {
        let own = run_campaign(&self_cfg).map_err(|e| e.to_string())?;
        let cat = catalog.as_ref().ok_or("catalog campaign failed")?;
        c6_consistency(&own, cat)
    });
    report(6, "engine consistency", r, t, minutes(30));

    let (r, t) = timed(c7_traces);
    report(7, "golden traces", r, t, minutes(5));

    let (r, t) = timed(c8_scan);
    report(8, "corpus scan", r, t, minutes(5));

    let (r, t) = timed(c9_determinism);
    report(9, "determinism", r, t, minutes(10));

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
