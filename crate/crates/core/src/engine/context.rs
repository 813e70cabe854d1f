//! Execution context shared identically by every engine in a comparison.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bytecode::Fork;
use crate::types::{content_key, hexbytes, Address, Word};

/// Address the program under test executes at.
pub const CALLEE: Address = Address::from_low_u64(0xc0de);
/// Transaction origin and direct caller.
pub const CALLER: Address = Address::from_low_u64(0xca11e4);
pub const ALICE: Address = Address::from_low_u64(0xa11ce);
pub const BOB: Address = Address::from_low_u64(0xb0b);

/// Addresses every context pre-populates; generators draw from these to
/// reach existing and warm accounts.
pub const KNOWN_ADDRESSES: [Address; 4] = [CALLEE, CALLER, ALICE, BOB];

pub const AMPLE_GAS: u64 = 1_000_000;
/// Probability that [`make_context`] picks a tight transaction gas limit.
pub const TIGHT_GAS_PROBABILITY: f64 = 0.2;
/// Tight gas limits are drawn uniformly from `[0, TIGHT_GAS_BOUND)`.
pub const TIGHT_GAS_BOUND: u64 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Account {
    pub balance: Word,
    pub nonce: u64,
    #[serde(with = "hexbytes")]
    pub code: Vec<u8>,
    pub storage: BTreeMap<Word, Word>,
}

impl Account {
    /// Empty in the state-clearing sense: no code, zero nonce and balance.
    pub fn is_empty(&self) -> bool {
        self.balance.is_zero() && self.nonce == 0 && self.code.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalState {
    pub chain_id: Word,
    pub block_number: Word,
    pub timestamp: Word,
    pub coinbase: Address,
    pub prev_randao: Word,
    pub gas_limit: Word,
    pub base_fee: Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEnv {
    pub origin: Address,
    pub caller: Address,
    /// Account whose code is replaced by the program under test.
    pub address: Address,
    pub callvalue: Word,
    #[serde(with = "hexbytes")]
    pub calldata: Vec<u8>,
    pub gas_limit: u64,
    pub gas_price: Word,
    pub static_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecContext {
    pub fork: Fork,
    pub accounts: BTreeMap<Address, Account>,
    pub global: GlobalState,
    pub tx: TxEnv,
    pub rng_seed: u64,
}

impl ExecContext {
    /// Fixed context with ample gas: the environment seeds are validated
    /// against.
    pub fn baseline() -> Self {
        let mut accounts = BTreeMap::new();
        for (i, a) in KNOWN_ADDRESSES.iter().enumerate() {
            accounts.insert(
                *a,
                Account {
                    balance: Word::from(1_000_000_000u64 * (i as u64 + 1)),
                    nonce: 1,
                    ..Default::default()
                },
            );
        }
        ExecContext {
            fork: Fork::Cancun,
            accounts,
            global: GlobalState {
                chain_id: Word::from(1u64),
                block_number: Word::from(20_000_000u64),
                timestamp: Word::from(1_700_000_000u64),
                coinbase: Address::from_low_u64(0xc01b),
                prev_randao: Word::from(0x5eedu64),
                gas_limit: Word::from(30_000_000u64),
                base_fee: Word::from(7u64),
            },
            tx: TxEnv {
                origin: CALLER,
                caller: CALLER,
                address: CALLEE,
                callvalue: Word::ZERO,
                calldata: vec![0xab; 36],
                gas_limit: AMPLE_GAS,
                gas_price: Word::from(10u64),
                static_flag: false,
            },
            rng_seed: 0,
        }
    }

    pub fn with_gas_limit(mut self, gas: u64) -> Self {
        self.tx.gas_limit = gas;
        self
    }

    pub fn with_static(mut self, flag: bool) -> Self {
        self.tx.static_flag = flag;
        self
    }

    /// Canonical serialization; equal strings imply identical behaviour on
    /// deterministic engines.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("context serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn key(&self) -> String {
        content_key(self.to_json().as_bytes())
    }

    pub fn is_consistent(&self) -> bool {
        Word::from(self.tx.gas_limit) <= self.global.gas_limit
    }
}

fn random_word<R: Rng>(rng: &mut R) -> Word {
    Word::from_be_bytes(rng.gen::<[u8; 32]>())
}

/// Deterministic randomized context. Ranges:
/// block number and timestamp in `[1, 2^32)`, balances in `[0, 2^64)`,
/// calldata length in `[0, 256]`, and a transaction gas limit that is tight
/// (`[0, 64)`) with probability 0.2, otherwise [`AMPLE_GAS`].
pub fn make_context(rng_seed: u64) -> ExecContext {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut accounts = BTreeMap::new();
    for a in KNOWN_ADDRESSES {
        let mut storage = BTreeMap::new();
        if a == CALLEE {
            for _ in 0..rng.gen_range(0..=4) {
                let slot = Word::from(rng.gen_range(0u64..8));
                storage.insert(slot, Word::from(rng.gen_range(1u64..=u32::MAX as u64)));
            }
        }
        accounts.insert(
            a,
            Account {
                balance: Word::from(rng.gen::<u64>()),
                nonce: rng.gen_range(0..4),
                code: Vec::new(),
                storage,
            },
        );
    }
    let block_gas_limit = rng.gen_range(10_000_000u64..=30_000_000);
    let base_fee = rng.gen_range(1u64..=100_000_000_000);
    let calldata_len = rng.gen_range(0..=256usize);
    let calldata = (0..calldata_len).map(|_| rng.gen()).collect();
    let tight = rng.gen_bool(TIGHT_GAS_PROBABILITY);
    let tx_gas = if tight { rng.gen_range(0..TIGHT_GAS_BOUND) } else { AMPLE_GAS };
    let mut coinbase = [0u8; 20];
    rng.fill(&mut coinbase);
    ExecContext {
        fork: Fork::Cancun,
        accounts,
        global: GlobalState {
            chain_id: if rng.gen_bool(0.5) { Word::from(1u64) } else { Word::from(rng.gen::<u32>()) },
            block_number: Word::from(rng.gen_range(1u64..1 << 32)),
            timestamp: Word::from(rng.gen_range(1u64..1 << 32)),
            coinbase: Address(coinbase),
            prev_randao: random_word(&mut rng),
            gas_limit: Word::from(block_gas_limit),
            base_fee: Word::from(base_fee),
        },
        tx: TxEnv {
            origin: CALLER,
            caller: CALLER,
            address: CALLEE,
            callvalue: Word::from(rng.gen_range(0u64..=1000)),
            calldata,
            gas_limit: tx_gas,
            gas_price: Word::from(base_fee + rng.gen_range(0u64..=1_000_000_000)),
            static_flag: false,
        },
        rng_seed,
    }
}
