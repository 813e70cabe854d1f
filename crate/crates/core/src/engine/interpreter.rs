//! Reference interpreter for the implemented opcode subset, with optional
//! fault injection for the mutant engines.

use std::collections::{BTreeMap, BTreeSet};

use crate::bytecode::{self, BytecodeProgram, OpInfo};
use crate::engine::context::{Account, ExecContext};
use crate::engine::faults::FaultId;
use crate::engine::trace::{memory_snapshot, FinalState, HaltReason, StepRecord, StorageDelta, Trace};
use crate::opspec::{gas_constants, spec_for, DynamicInputs, SstoreValues};
use crate::types::{keccak256, Address, Word};

/// Largest init code CREATE/CREATE2 accept before failing out of gas.
pub const MAX_INITCODE_SIZE: usize = 49152;
/// Opcodes whose step records carry a storage delta.
pub const STORAGE_OPS: [u8; 6] = [0x55, 0x5d, 0xf0, 0xf5, 0xff, 0xfd];
const STACK_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Interpreter {
    pub fault: Option<FaultId>,
}

impl Interpreter {
    pub fn reference() -> Self {
        Interpreter { fault: None }
    }

    pub fn mutant(fault: FaultId) -> Self {
        Interpreter { fault: Some(fault) }
    }

    pub fn run(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
        Machine::new(self.fault, program, ctx, false).run()
    }

    /// Like [`run`](Self::run), also recording the gas-rule inputs seen at
    /// each step.
    pub fn run_observed(&self, program: &BytecodeProgram, ctx: &ExecContext) -> Trace {
        Machine::new(self.fault, program, ctx, true).run()
    }
}

struct Halt {
    reason: HaltReason,
    detail: Option<String>,
}

impl Halt {
    fn new(reason: HaltReason) -> Self {
        Halt { reason, detail: None }
    }

    fn detail(reason: HaltReason, detail: impl Into<String>) -> Self {
        Halt { reason, detail: Some(detail.into()) }
    }
}

type Step = Result<(), Halt>;

#[derive(Default)]
struct Memory {
    data: Vec<u8>,
    /// One past the highest byte any access touched.
    high_water: usize,
}

impl Memory {
    fn words(&self) -> u64 {
        (self.data.len() / 32) as u64
    }

    /// Grows to cover `[offset, offset + size)`. Callers charge first, so the
    /// range is known to be affordable.
    fn touch(&mut self, offset: usize, size: usize) {
        if size == 0 {
            return;
        }
        let end = offset + size;
        self.high_water = self.high_water.max(end);
        let new_len = end.div_ceil(32) * 32;
        if new_len > self.data.len() {
            self.data.resize(new_len, 0);
        }
    }

    fn read(&mut self, offset: usize, size: usize) -> Vec<u8> {
        self.touch(offset, size);
        if size == 0 {
            return Vec::new();
        }
        self.data[offset..offset + size].to_vec()
    }

    fn write(&mut self, offset: usize, bytes: &[u8]) {
        self.touch(offset, bytes.len());
        self.data[offset..offset + bytes.len()].copy_from_slice(bytes);
    }
}

#[derive(Clone, PartialEq, Eq)]
struct WorldView {
    storage: BTreeMap<Word, Word>,
    transient: BTreeMap<Word, Word>,
    balances: BTreeMap<Address, Word>,
    created: BTreeSet<Address>,
}

fn diff_maps<K: Ord + Copy>(before: &BTreeMap<K, Word>, after: &BTreeMap<K, Word>) -> BTreeMap<K, Word> {
    let mut out = BTreeMap::new();
    for k in before.keys().chain(after.keys()) {
        let a = after.get(k).copied().unwrap_or(Word::ZERO);
        if before.get(k).copied().unwrap_or(Word::ZERO) != a {
            out.insert(*k, a);
        }
    }
    out
}

impl WorldView {
    fn delta(&self, after: &WorldView) -> StorageDelta {
        StorageDelta {
            storage: diff_maps(&self.storage, &after.storage),
            transient: diff_maps(&self.transient, &after.transient),
            balances: diff_maps(&self.balances, &after.balances),
            created: after.created.difference(&self.created).copied().collect(),
        }
    }
}

struct World {
    accounts: BTreeMap<Address, Account>,
    transient: BTreeMap<Word, Word>,
    warm_accounts: BTreeSet<Address>,
    warm_slots: BTreeSet<Word>,
    created: BTreeSet<Address>,
}

fn as_usize(w: Word) -> Option<usize> {
    u64::try_from(w).ok().and_then(|v| usize::try_from(v).ok())
}

fn words(len: u64) -> u64 {
    len.div_ceil(32)
}

fn memory_fee(words: u64) -> u64 {
    let c = gas_constants();
    let w = words as u128;
    let fee = c.memory_word as u128 * w + w * w / c.memory_quad_divisor as u128;
    fee.min(u64::MAX as u128) as u64
}

fn is_negative(w: Word) -> bool {
    w.bit(255)
}

fn abs(w: Word) -> Word {
    if is_negative(w) {
        w.wrapping_neg()
    } else {
        w
    }
}

fn signed_lt(a: Word, b: Word) -> bool {
    let flip = Word::from(1u64) << 255;
    (a ^ flip) < (b ^ flip)
}

fn rlp_create_address(sender: Address, nonce: u64) -> Address {
    let nonce_bytes: Vec<u8> = if nonce == 0 {
        vec![0x80]
    } else if nonce < 0x80 {
        vec![nonce as u8]
    } else {
        let be = nonce.to_be_bytes();
        let trimmed: Vec<u8> = be.iter().copied().skip_while(|b| *b == 0).collect();
        let mut v = vec![0x80 + trimmed.len() as u8];
        v.extend(trimmed);
        v
    };
    let mut payload = vec![0x94];
    payload.extend_from_slice(&sender.0);
    payload.extend(nonce_bytes);
    let mut rlp = vec![0xc0 + payload.len() as u8];
    rlp.extend(payload);
    let h = keccak256(&rlp);
    let mut a = [0u8; 20];
    a.copy_from_slice(&h[12..]);
    Address(a)
}

fn create2_address(sender: Address, salt: Word, init: &[u8]) -> Address {
    let mut buf = vec![0xff];
    buf.extend_from_slice(&sender.0);
    buf.extend_from_slice(&salt.to_be_bytes::<32>());
    buf.extend_from_slice(&keccak256(init));
    let h = keccak256(&buf);
    let mut a = [0u8; 20];
    a.copy_from_slice(&h[12..]);
    Address(a)
}

/// Bytes `[offset, offset + size)` of `src`, zero-padded past its end.
fn padded_slice(src: &[u8], offset: Word, size: usize) -> Vec<u8> {
    let mut out = vec![0u8; size];
    if let Some(off) = as_usize(offset) {
        if off < src.len() {
            let n = size.min(src.len() - off);
            out[..n].copy_from_slice(&src[off..off + n]);
        }
    }
    out
}

struct Machine<'a> {
    fault: Option<FaultId>,
    code: &'a [u8],
    jumpdests: &'a BTreeSet<usize>,
    ctx: &'a ExecContext,
    pc: usize,
    gas: u64,
    stack: Vec<Word>,
    mem: Memory,
    world: World,
    return_data: Vec<u8>,
    steps: Vec<StepRecord>,
    observed: Option<Vec<DynamicInputs>>,
}

impl<'a> Machine<'a> {
    fn new(fault: Option<FaultId>, program: &'a BytecodeProgram, ctx: &'a ExecContext, observe: bool) -> Self {
        let mut warm_accounts: BTreeSet<Address> =
            [ctx.tx.origin, ctx.tx.caller, ctx.tx.address, ctx.global.coinbase].into_iter().collect();
        warm_accounts.extend((1..=10u64).map(Address::from_low_u64));
        let mut accounts = ctx.accounts.clone();
        accounts.entry(ctx.tx.address).or_default().code = program.bytes().to_vec();
        Machine {
            fault,
            code: program.bytes(),
            jumpdests: program.jumpdests(),
            ctx,
            pc: 0,
            gas: ctx.tx.gas_limit,
            stack: Vec::new(),
            mem: Memory::default(),
            world: World {
                accounts,
                transient: BTreeMap::new(),
                warm_accounts,
                warm_slots: BTreeSet::new(),
                created: BTreeSet::new(),
            },
            return_data: Vec::new(),
            steps: Vec::new(),
            observed: observe.then(Vec::new),
        }
    }

    fn has_fault(&self, f: FaultId) -> bool {
        self.fault == Some(f)
    }

    fn callee(&self) -> Address {
        self.ctx.tx.address
    }

    fn view(&self) -> WorldView {
        WorldView {
            storage: self.world.accounts.get(&self.callee()).map(|a| a.storage.clone()).unwrap_or_default(),
            transient: self.world.transient.clone(),
            balances: self.world.accounts.iter().map(|(a, acc)| (*a, acc.balance)).collect(),
            created: self.world.created.clone(),
        }
    }

    fn run(mut self) -> Trace {
        let halt = loop {
            if let Err(h) = self.step() {
                break h;
            }
        };
        self.finish(halt)
    }

    fn finish(mut self, halt: Halt) -> Trace {
        let limit = self.ctx.tx.gas_limit;
        let gas_used = if halt.reason.is_exceptional() && halt.reason != HaltReason::EngineError {
            limit
        } else {
            limit - self.gas
        };
        let return_data = match halt.reason {
            HaltReason::Success | HaltReason::Revert => std::mem::take(&mut self.return_data),
            _ => Vec::new(),
        };
        let world = if halt.reason == HaltReason::Success {
            self.world.accounts
        } else {
            let mut accounts = self.ctx.accounts.clone();
            accounts.entry(self.ctx.tx.address).or_default().code = self.code.to_vec();
            accounts
        };
        let storage_after = world
            .into_iter()
            .filter(|(_, a)| !a.storage.is_empty())
            .map(|(addr, a)| (addr, a.storage))
            .collect();
        Trace {
            steps: self.steps,
            final_state: FinalState { halt: halt.reason, detail: halt.detail, return_data, gas_used, storage_after },
            provenance: None,
            observed: self.observed,
        }
    }

    /// Undo every state change, as an exceptional halt or REVERT does.
    fn rollback(&mut self) {
        let mut accounts = self.ctx.accounts.clone();
        accounts.entry(self.ctx.tx.address).or_default().code = self.code.to_vec();
        self.world.accounts = accounts;
        self.world.transient.clear();
        self.world.created.clear();
    }

    fn step(&mut self) -> Step {
        if self.pc >= self.code.len() {
            return Err(Halt::new(HaltReason::Success));
        }
        let byte = self.code[self.pc];
        if self.has_fault(FaultId::F6) && byte == 0xff {
            return Err(Halt::detail(
                HaltReason::EngineError,
                "SELFDESTRUCT: instruction object has no attribute `mnemonic`",
            ));
        }
        if self.has_fault(FaultId::F7) && byte == 0x44 {
            return Err(Halt::detail(HaltReason::EngineError, "no handler bound for opcode 0x44"));
        }
        let info = bytecode::opcode_info(byte, self.ctx.fork);
        self.steps.push(StepRecord {
            pc: self.pc,
            op: byte,
            op_name: bytecode::op(byte).mnemonic.to_string(),
            gas: self.gas,
            gas_cost: 0,
            stack: self.stack.clone(),
            mem_size: self.mem.data.len(),
            memory: Some(memory_snapshot(&self.mem.data)),
            depth: 1,
            storage_delta: None,
        });
        if let Some(obs) = self.observed.as_mut() {
            obs.push(DynamicInputs::default());
        }
        let tracks_storage = STORAGE_OPS.contains(&byte);
        let before = tracks_storage.then(|| self.view());
        let result = match info {
            Some(info) if byte != 0xfe => self.dispatch(info),
            _ => Err(Halt::detail(HaltReason::InvalidOpcode, format!("opcode 0x{byte:02x}"))),
        };
        if let Err(h) = &result {
            if h.reason != HaltReason::Success {
                self.rollback();
            }
        }
        if let Some(before) = before {
            let delta = before.delta(&self.view());
            self.steps.last_mut().expect("step recorded").storage_delta = Some(delta);
        }
        result
    }

    fn dispatch(&mut self, info: &'static OpInfo) -> Step {
        let pops = info.pops as usize;
        if self.stack.len() < pops {
            let static_gas = spec_for(info.byte, self.ctx.fork).map(|s| s.static_gas).unwrap_or(0);
            self.steps.last_mut().expect("step recorded").gas_cost = static_gas;
            return Err(Halt::detail(
                HaltReason::StackUnderflow,
                format!("{} needs {} items, stack has {}", info.mnemonic, pops, self.stack.len()),
            ));
        }
        self.execute(info)
    }

    fn peek(&self, i: usize) -> Word {
        self.stack[self.stack.len() - 1 - i]
    }

    fn pop(&mut self) -> Word {
        self.stack.pop().expect("arity checked before execution")
    }

    fn push(&mut self, w: Word) {
        self.stack.push(w);
    }

    /// Word count memory would grow to for an access, or `None` when the range
    /// cannot be addressed at all.
    fn mem_target(&self, offset: Word, size: Word) -> Option<u64> {
        if size.is_zero() {
            return Some(self.mem.words());
        }
        let off = u64::try_from(offset).ok()?;
        let sz = u64::try_from(size).ok()?;
        let end = off.checked_add(sz)?;
        Some(words(end).max(self.mem.words()))
    }

    fn mem_charge(&self, target: Option<u64>) -> u64 {
        match target {
            Some(w) => memory_fee(w) - memory_fee(self.mem.words()),
            None => u64::MAX,
        }
    }

    fn mem_inputs(&self, target: Option<u64>) -> (u64, u64) {
        (self.mem.words(), target.unwrap_or(u64::MAX >> 6))
    }

    /// Records and deducts the step cost, then checks the stack bound.
    fn charge(&mut self, info: &OpInfo, cost: u64, inputs: DynamicInputs) -> Step {
        self.steps.last_mut().expect("step recorded").gas_cost = cost;
        if let Some(obs) = self.observed.as_mut() {
            *obs.last_mut().expect("observation slot") = inputs;
        }
        if cost > self.gas {
            return Err(Halt::detail(HaltReason::OutOfGas, format!("needs {cost}, has {}", self.gas)));
        }
        self.gas -= cost;
        let after = self.stack.len() - info.pops as usize + info.pushes as usize;
        if after > STACK_LIMIT {
            return Err(Halt::detail(HaltReason::StackOverflow, format!("stack would reach {after}")));
        }
        Ok(())
    }

    fn check_static(&self) -> Step {
        if self.ctx.tx.static_flag {
            Err(Halt::new(HaltReason::WriteInStatic))
        } else {
            Ok(())
        }
    }

    fn is_warm(&self, a: &Address) -> bool {
        self.world.warm_accounts.contains(a)
    }

    fn balance_of(&self, a: &Address) -> Word {
        self.world.accounts.get(a).map(|acc| acc.balance).unwrap_or(Word::ZERO)
    }

    fn is_dead(&self, a: &Address) -> bool {
        self.world.accounts.get(a).map(|acc| acc.is_empty()).unwrap_or(true)
    }

    fn storage_get(&self, slot: &Word) -> Word {
        self.world
            .accounts
            .get(&self.callee())
            .and_then(|a| a.storage.get(slot).copied())
            .unwrap_or(Word::ZERO)
    }

    fn original_storage(&self, slot: &Word) -> Word {
        self.ctx
            .accounts
            .get(&self.callee())
            .and_then(|a| a.storage.get(slot).copied())
            .unwrap_or(Word::ZERO)
    }

    fn advance(&mut self) -> Step {
        self.pc += 1;
        Ok(())
    }

    fn execute(&mut self, info: &'static OpInfo) -> Step {
        let c = gas_constants();
        let byte = info.byte;
        let static_gas = spec_for(byte, self.ctx.fork).map(|s| s.static_gas).unwrap_or(0);
        let none = DynamicInputs::default();
        match byte {
            0x00 => {
                self.charge(info, 0, none)?;
                Err(Halt::new(HaltReason::Success))
            }
            0x01..=0x07 | 0x08 | 0x09 | 0x0b | 0x10..=0x1d => {
                self.charge(info, static_gas, none)?;
                let r = self.arith(byte);
                self.push(r);
                self.advance()
            }
            0x0a => {
                let exponent = self.peek(1);
                let exp_bytes = (exponent.bit_len() as u64).div_ceil(8);
                let cost = static_gas + c.exp_byte * exp_bytes;
                self.charge(info, cost, DynamicInputs { exponent_bytes: Some(exp_bytes), ..none })?;
                let base = self.pop();
                let exponent = self.pop();
                let r = if self.has_fault(FaultId::F1) {
                    base.saturating_pow(exponent)
                } else {
                    base.wrapping_pow(exponent)
                };
                self.push(r);
                self.advance()
            }
            0x20 => {
                let (off, size) = (self.peek(0), self.peek(1));
                let target = self.mem_target(off, size);
                let len = u64::try_from(size).unwrap_or(u64::MAX);
                let cost = static_gas
                    .saturating_add(c.keccak_word.saturating_mul(words(len)))
                    .saturating_add(self.mem_charge(target));
                let inputs = DynamicInputs { data_len: Some(len), memory_words: Some(self.mem_inputs(target)), ..none };
                self.charge(info, cost, inputs)?;
                self.pop();
                self.pop();
                let data = self.mem.read(as_usize(off).unwrap_or(0), len as usize);
                self.push(Word::from_be_bytes(keccak256(&data)));
                self.advance()
            }
            0x30 => self.push_env(info, static_gas, self.callee().to_word()),
            0x31 => {
                let addr = Address::from_word(self.peek(0));
                let warm = self.is_warm(&addr);
                let cost = if warm || self.has_fault(FaultId::F3) { c.warm_access } else { c.cold_account_access };
                self.charge(info, static_gas + cost, DynamicInputs { warm: Some(warm), ..none })?;
                self.pop();
                self.world.warm_accounts.insert(addr);
                let b = self.balance_of(&addr);
                self.push(b);
                self.advance()
            }
            0x32 => self.push_env(info, static_gas, self.ctx.tx.origin.to_word()),
            0x33 => self.push_env(info, static_gas, self.ctx.tx.caller.to_word()),
            0x34 => self.push_env(info, static_gas, self.ctx.tx.callvalue),
            0x35 => {
                self.charge(info, static_gas, none)?;
                let off = self.pop();
                let w = padded_slice(&self.ctx.tx.calldata, off, 32);
                self.push(Word::from_be_slice(&w));
                self.advance()
            }
            0x36 => self.push_env(info, static_gas, Word::from(self.ctx.tx.calldata.len())),
            0x37 | 0x39 => {
                let (mem_off, data_off, size) = (self.peek(0), self.peek(1), self.peek(2));
                let target = self.mem_target(mem_off, size);
                let len = u64::try_from(size).unwrap_or(u64::MAX);
                let cost = static_gas
                    .saturating_add(c.copy_word.saturating_mul(words(len)))
                    .saturating_add(self.mem_charge(target));
                let inputs = DynamicInputs { data_len: Some(len), memory_words: Some(self.mem_inputs(target)), ..none };
                self.charge(info, cost, inputs)?;
                self.pop();
                self.pop();
                self.pop();
                if len > 0 {
                    let src: &[u8] = if byte == 0x37 { &self.ctx.tx.calldata } else { self.code };
                    let data = padded_slice(src, data_off, len as usize);
                    self.mem.write(as_usize(mem_off).expect("charged range"), &data);
                }
                self.advance()
            }
            0x38 => self.push_env(info, static_gas, Word::from(self.code.len())),
            0x3a => self.push_env(info, static_gas, self.ctx.tx.gas_price),
            0x40 => {
                self.charge(info, static_gas, none)?;
                let n = self.pop();
                let current = self.ctx.global.block_number;
                let lower = current.saturating_sub(Word::from(256u64));
                let h = if n < current && n >= lower {
                    Word::from_be_bytes(keccak256(&n.to_be_bytes::<32>()))
                } else {
                    Word::ZERO
                };
                self.push(h);
                self.advance()
            }
            0x41 => self.push_env(info, static_gas, self.ctx.global.coinbase.to_word()),
            0x42 => self.push_env(info, static_gas, self.ctx.global.timestamp),
            0x43 => self.push_env(info, static_gas, self.ctx.global.block_number),
            0x44 => self.push_env(info, static_gas, self.ctx.global.prev_randao),
            0x45 => self.push_env(info, static_gas, self.ctx.global.gas_limit),
            0x46 => self.push_env(info, static_gas, self.ctx.global.chain_id),
            0x47 => {
                let b = self.balance_of(&self.callee());
                self.push_env(info, static_gas, b)
            }
            0x48 => self.push_env(info, static_gas, self.ctx.global.base_fee),
            0x50 => {
                self.charge(info, static_gas, none)?;
                self.pop();
                self.advance()
            }
            0x51..=0x53 => {
                let off = self.peek(0);
                let width = if byte == 0x53 { 1u64 } else { 32 };
                let target = self.mem_target(off, Word::from(width));
                let cost = static_gas.saturating_add(self.mem_charge(target));
                self.charge(info, cost, DynamicInputs { memory_words: Some(self.mem_inputs(target)), ..none })?;
                let off = as_usize(self.pop()).expect("charged range");
                match byte {
                    0x51 => {
                        let data = self.mem.read(off, 32);
                        self.push(Word::from_be_slice(&data));
                    }
                    0x52 => {
                        let v = self.pop();
                        self.mem.write(off, &v.to_be_bytes::<32>());
                    }
                    _ => {
                        let v = self.pop();
                        self.mem.write(off, &[v.byte(0)]);
                    }
                }
                self.advance()
            }
            0x54 => {
                let slot = self.peek(0);
                let warm = self.world.warm_slots.contains(&slot);
                let cost = static_gas + if warm { c.warm_access } else { c.cold_sload };
                self.charge(info, cost, DynamicInputs { warm: Some(warm), ..none })?;
                self.pop();
                self.world.warm_slots.insert(slot);
                let v = self.storage_get(&slot);
                self.push(v);
                self.advance()
            }
            0x55 => {
                let (slot, new) = (self.peek(0), self.peek(1));
                let warm = self.world.warm_slots.contains(&slot);
                let original = self.original_storage(&slot);
                let current = self.storage_get(&slot);
                let mut cost = if warm { 0 } else { c.cold_sload };
                if original == current && current != new {
                    cost += if original.is_zero() { c.sstore_set } else { c.sstore_reset };
                } else {
                    cost += c.warm_access;
                }
                let inputs = DynamicInputs {
                    warm: Some(warm),
                    sstore: Some(SstoreValues { original, current, new }),
                    ..none
                };
                if self.gas <= c.sstore_stipend {
                    self.charge(info, static_gas + cost, inputs)?;
                    return Err(Halt::detail(HaltReason::OutOfGas, "gas left within call stipend"));
                }
                self.charge(info, static_gas + cost, inputs)?;
                self.check_static()?;
                self.pop();
                self.pop();
                self.world.warm_slots.insert(slot);
                let callee = self.callee();
                let storage = &mut self.world.accounts.entry(callee).or_default().storage;
                if new.is_zero() {
                    storage.remove(&slot);
                } else {
                    storage.insert(slot, new);
                }
                self.advance()
            }
            0x56 => {
                self.charge(info, static_gas, none)?;
                let target = self.pop();
                if self.has_fault(FaultId::F2) {
                    self.pc = as_usize(target).unwrap_or(usize::MAX).min(self.code.len());
                    return Ok(());
                }
                self.jump_to(target)
            }
            0x57 => {
                self.charge(info, static_gas, none)?;
                let target = self.pop();
                let cond = self.pop();
                if cond.is_zero() {
                    self.advance()
                } else {
                    self.jump_to(target)
                }
            }
            0x58 => self.push_env(info, static_gas, Word::from(self.pc)),
            0x59 => {
                let size = if self.has_fault(FaultId::F8) { self.mem.high_water } else { self.mem.data.len() };
                self.push_env(info, static_gas, Word::from(size))
            }
            0x5a => {
                self.charge(info, static_gas, none)?;
                self.push(Word::from(self.gas));
                self.advance()
            }
            0x5b => {
                self.charge(info, static_gas, none)?;
                self.advance()
            }
            0x5c => {
                self.charge(info, static_gas, none)?;
                let slot = self.pop();
                let v = self.world.transient.get(&slot).copied().unwrap_or(Word::ZERO);
                self.push(v);
                self.advance()
            }
            0x5d => {
                self.charge(info, static_gas, none)?;
                self.check_static()?;
                let slot = self.pop();
                let v = self.pop();
                if v.is_zero() {
                    self.world.transient.remove(&slot);
                } else {
                    self.world.transient.insert(slot, v);
                }
                self.advance()
            }
            0x5e => {
                let (dst, src, size) = (self.peek(0), self.peek(1), self.peek(2));
                let target = self.mem_target(dst.max(src), size);
                let len = u64::try_from(size).unwrap_or(u64::MAX);
                let cost = static_gas
                    .saturating_add(c.copy_word.saturating_mul(words(len)))
                    .saturating_add(self.mem_charge(target));
                let inputs = DynamicInputs { data_len: Some(len), memory_words: Some(self.mem_inputs(target)), ..none };
                self.charge(info, cost, inputs)?;
                self.pop();
                self.pop();
                self.pop();
                if len > 0 {
                    let data = self.mem.read(as_usize(src).expect("charged range"), len as usize);
                    self.mem.write(as_usize(dst).expect("charged range"), &data);
                }
                self.advance()
            }
            0x5f => self.push_env(info, static_gas, Word::ZERO),
            0x60..=0x7f => {
                self.charge(info, static_gas, none)?;
                let n = info.immediate_len as usize;
                let mut imm = [0u8; 32];
                let start = self.pc + 1;
                for i in 0..n {
                    imm[32 - n + i] = self.code.get(start + i).copied().unwrap_or(0);
                }
                self.push(Word::from_be_bytes(imm));
                let stride = if byte == 0x60 && self.has_fault(FaultId::F4) { 3 } else { 1 + n };
                self.pc += stride;
                Ok(())
            }
            0x80..=0x8f => {
                self.charge(info, static_gas, none)?;
                let v = self.peek((byte - 0x80) as usize);
                self.push(v);
                self.advance()
            }
            0x90..=0x9f => {
                self.charge(info, static_gas, none)?;
                let n = (byte - 0x8f) as usize;
                let top = self.stack.len() - 1;
                self.stack.swap(top, top - n);
                self.advance()
            }
            0xa0..=0xa4 => {
                let topics = (byte - 0xa0) as u64;
                let (off, size) = (self.peek(0), self.peek(1));
                let target = self.mem_target(off, size);
                let len = u64::try_from(size).unwrap_or(u64::MAX);
                let cost = static_gas
                    .saturating_add(c.log_topic * topics)
                    .saturating_add(c.log_data.saturating_mul(len))
                    .saturating_add(self.mem_charge(target));
                let inputs = DynamicInputs { data_len: Some(len), memory_words: Some(self.mem_inputs(target)), ..none };
                self.charge(info, cost, inputs)?;
                self.check_static()?;
                for _ in 0..topics + 2 {
                    self.pop();
                }
                self.mem.touch(as_usize(off).unwrap_or(0), len as usize);
                self.advance()
            }
            0xf0 | 0xf5 => self.create(info, static_gas),
            0xf1 | 0xf2 | 0xf4 | 0xfa => self.call(info, static_gas),
            0xf3 | 0xfd => {
                let (off, size) = (self.peek(0), self.peek(1));
                let target = self.mem_target(off, size);
                let cost = static_gas.saturating_add(self.mem_charge(target));
                self.charge(info, cost, DynamicInputs { memory_words: Some(self.mem_inputs(target)), ..none })?;
                self.pop();
                self.pop();
                let len = as_usize(size).expect("charged range");
                self.return_data = self.mem.read(as_usize(off).unwrap_or(0), len);
                Err(Halt::new(if byte == 0xf3 { HaltReason::Success } else { HaltReason::Revert }))
            }
            0xff => {
                let beneficiary = Address::from_word(self.peek(0));
                let warm = self.is_warm(&beneficiary);
                let own_balance = self.balance_of(&self.callee());
                let new_account = self.is_dead(&beneficiary) && !own_balance.is_zero();
                let mut cost = static_gas;
                if !warm {
                    cost += c.cold_account_access;
                }
                if new_account {
                    cost += c.selfdestruct_new_account;
                }
                let inputs = DynamicInputs { warm: Some(warm), new_account: Some(new_account), ..none };
                self.charge(info, cost, inputs)?;
                self.check_static()?;
                self.pop();
                self.world.warm_accounts.insert(beneficiary);
                let callee = self.callee();
                if beneficiary != callee {
                    self.world.accounts.entry(callee).or_default().balance = Word::ZERO;
                    let b = self.world.accounts.entry(beneficiary).or_default();
                    b.balance = b.balance.saturating_add(own_balance);
                }
                Err(Halt::new(HaltReason::Success))
            }
            _ => Err(Halt::detail(
                HaltReason::EngineError,
                format!("no semantics implemented for {}", info.mnemonic),
            )),
        }
    }

    fn push_env(&mut self, info: &OpInfo, static_gas: u64, value: Word) -> Step {
        self.charge(info, static_gas, DynamicInputs::default())?;
        self.push(value);
        self.advance()
    }

    fn jump_to(&mut self, target: Word) -> Step {
        match as_usize(target) {
            Some(t) if self.jumpdests.contains(&t) => {
                self.pc = t;
                Ok(())
            }
            _ => Err(Halt::detail(HaltReason::InvalidJumpdest, format!("target {target:#x}"))),
        }
    }

    fn arith(&mut self, byte: u8) -> Word {
        let a = self.pop();
        if matches!(byte, 0x15 | 0x19) {
            return match byte {
                0x15 => Word::from(a.is_zero() as u64),
                _ => !a,
            };
        }
        let b = self.pop();
        let bool_word = |v: bool| Word::from(v as u64);
        match byte {
            0x01 => a.wrapping_add(b),
            0x02 => a.wrapping_mul(b),
            0x03 => a.wrapping_sub(b),
            0x04 => a.checked_div(b).unwrap_or(Word::ZERO),
            0x05 => {
                if b.is_zero() {
                    Word::ZERO
                } else {
                    let q = abs(a) / abs(b);
                    if is_negative(a) != is_negative(b) {
                        q.wrapping_neg()
                    } else {
                        q
                    }
                }
            }
            0x06 => a.checked_rem(b).unwrap_or(Word::ZERO),
            0x07 => {
                if b.is_zero() {
                    Word::ZERO
                } else {
                    let r = abs(a) % abs(b);
                    if is_negative(a) {
                        r.wrapping_neg()
                    } else {
                        r
                    }
                }
            }
            0x08 | 0x09 => {
                let n = self.pop();
                if n.is_zero() {
                    Word::ZERO
                } else if byte == 0x08 {
                    a.add_mod(b, n)
                } else {
                    a.mul_mod(b, n)
                }
            }
            0x0b => {
                if a >= Word::from(31u64) {
                    b
                } else {
                    let bit = a.to::<usize>() * 8 + 7;
                    let mask = (Word::from(1u64) << (bit + 1)) - Word::from(1u64);
                    if b.bit(bit) {
                        b | !mask
                    } else {
                        b & mask
                    }
                }
            }
            0x10 => bool_word(a < b),
            0x11 => bool_word(a > b),
            0x12 => bool_word(signed_lt(a, b)),
            0x13 => bool_word(signed_lt(b, a)),
            0x14 => bool_word(a == b),
            0x16 => a & b,
            0x17 => a | b,
            0x18 => a ^ b,
            0x1a => {
                if a >= Word::from(32u64) {
                    Word::ZERO
                } else {
                    Word::from(b.byte(31 - a.to::<usize>()))
                }
            }
            0x1b | 0x1c => {
                if a >= Word::from(256u64) {
                    Word::ZERO
                } else if byte == 0x1b {
                    b << a.to::<usize>()
                } else {
                    b >> a.to::<usize>()
                }
            }
            0x1d => {
                if a >= Word::from(256u64) {
                    if is_negative(b) {
                        Word::MAX
                    } else {
                        Word::ZERO
                    }
                } else {
                    b.arithmetic_shr(a.to::<usize>())
                }
            }
            _ => unreachable!("arith called for 0x{byte:02x}"),
        }
    }

    fn create(&mut self, info: &OpInfo, static_gas: u64) -> Step {
        let c = gas_constants();
        let is_create2 = info.byte == 0xf5;
        let (off, size) = (self.peek(1), self.peek(2));
        let target = self.mem_target(off, size);
        let len = u64::try_from(size).unwrap_or(u64::MAX);
        let per_word = if is_create2 { c.initcode_word + c.keccak_word } else { c.initcode_word };
        let cost = static_gas
            .saturating_add(per_word.saturating_mul(words(len)))
            .saturating_add(self.mem_charge(target));
        let inputs = DynamicInputs {
            data_len: Some(len),
            memory_words: Some(self.mem_inputs(target)),
            ..DynamicInputs::default()
        };
        self.charge(info, cost, inputs)?;
        if len as usize > MAX_INITCODE_SIZE {
            return Err(Halt::detail(HaltReason::OutOfGas, "init code exceeds size limit"));
        }
        self.check_static()?;
        let mut value = self.pop();
        self.pop();
        self.pop();
        let mut salt = if is_create2 { self.pop() } else { Word::ZERO };
        if is_create2 && self.has_fault(FaultId::F5) {
            std::mem::swap(&mut value, &mut salt);
        }
        let init = self.mem.read(as_usize(off).unwrap_or(0), len as usize);
        let sender = self.callee();
        if value > self.balance_of(&sender) {
            self.push(Word::ZERO);
            return self.advance();
        }
        let acc = self.world.accounts.entry(sender).or_default();
        let nonce = acc.nonce;
        acc.nonce += 1;
        if !init.is_empty() {
            // Flat semantics: init code is never run, so the creation fails.
            self.push(Word::ZERO);
            return self.advance();
        }
        let addr = if is_create2 { create2_address(sender, salt, &init) } else { rlp_create_address(sender, nonce) };
        self.world.warm_accounts.insert(addr);
        let collision = self.world.accounts.get(&addr).map(|a| a.nonce != 0 || !a.code.is_empty()).unwrap_or(false);
        if collision {
            self.push(Word::ZERO);
            return self.advance();
        }
        self.world.accounts.get_mut(&sender).expect("sender exists").balance -= value;
        let created = self.world.accounts.entry(addr).or_default();
        created.nonce = 1;
        created.balance += value;
        self.world.created.insert(addr);
        self.push(addr.to_word());
        self.advance()
    }

    fn call(&mut self, info: &OpInfo, static_gas: u64) -> Step {
        let c = gas_constants();
        let has_value = matches!(info.byte, 0xf1 | 0xf2);
        let addr = Address::from_word(self.peek(1));
        let value = if has_value { self.peek(2) } else { Word::ZERO };
        let base = if has_value { 3 } else { 2 };
        let (in_off, in_size, out_off, out_size) =
            (self.peek(base), self.peek(base + 1), self.peek(base + 2), self.peek(base + 3));
        let t_in = self.mem_target(in_off, in_size);
        let t_out = self.mem_target(out_off, out_size);
        let target = match (t_in, t_out) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        let warm = self.is_warm(&addr);
        let transfers = !value.is_zero();
        let new_account = info.byte == 0xf1 && self.is_dead(&addr);
        let mut cost = static_gas
            .saturating_add(if warm { c.warm_access } else { c.cold_account_access })
            .saturating_add(self.mem_charge(target));
        if transfers {
            cost = cost.saturating_add(c.value_transfer);
            if new_account {
                cost = cost.saturating_add(c.new_account);
            }
        }
        let inputs = DynamicInputs {
            warm: Some(warm),
            memory_words: Some(self.mem_inputs(target)),
            value_transfer: Some(transfers),
            new_account: Some(new_account),
            ..DynamicInputs::default()
        };
        self.charge(info, cost, inputs)?;
        if info.byte == 0xf1 && transfers {
            self.check_static()?;
        }
        for _ in 0..info.pops {
            self.pop();
        }
        self.world.warm_accounts.insert(addr);
        if let Some(t) = target {
            let end = t as usize * 32;
            if end > 0 {
                self.mem.touch(0, end);
                self.mem.high_water = self.mem.high_water.max(
                    [(in_off, in_size), (out_off, out_size)]
                        .iter()
                        .filter(|(_, s)| !s.is_zero())
                        .map(|(o, s)| as_usize(*o).unwrap_or(0) + as_usize(*s).unwrap_or(0))
                        .max()
                        .unwrap_or(0),
                );
            }
        }
        self.push(Word::ZERO);
        self.advance()
    }
}
