use serde::{Deserialize, Serialize};

use crate::analytics::VerificationMode;
use crate::seed;
use crate::workload::{CompiledWorkload, TransactionRecord};

use super::schedule::verification_time;

pub const BLOCK_REWARD_ETH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerConfig {
    pub id: usize,
    pub alpha: f64,
    pub verifies: bool,
    #[serde(default = "one")]
    pub processors: u32,
    #[serde(default)]
    pub produces_invalid: bool,
}

fn one() -> u32 {
    1
}

impl MinerConfig {
    pub fn honest(id: usize, alpha: f64, verifies: bool) -> Self {
        Self {
            id,
            alpha,
            verifies,
            processors: 1,
            produces_invalid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub parent: Option<usize>,
    pub miner: usize,
    pub timestamp: f64,
    pub transactions: Vec<TransactionRecord>,
    pub valid: bool,
    pub total_fee: f64,
    pub gas_used_total: u64,
}

impl Block {
    pub fn verification_time(&self, mode: VerificationMode, processors: u32) -> f64 {
        verification_time(&self.transactions, mode, processors)
    }
}

/// Fills a block with freshly sampled transactions until the next one would
/// overflow the gas limit. Height, parent and timestamp are left for the
/// caller to set.
pub fn build_block(
    miner: &MinerConfig,
    workload: &CompiledWorkload,
    block_limit: u64,
    conflict_rate: f64,
    rng_seed: u64,
) -> Block {
    let mut rng = seed::rng(rng_seed, &[]);
    let cap = workload.block_limit().min(block_limit);
    let mut remaining = block_limit;
    let mut transactions = Vec::new();
    loop {
        let tx = workload.draw(&mut rng, cap, conflict_rate);
        if tx.used_gas > remaining {
            break;
        }
        remaining -= tx.used_gas;
        transactions.push(tx);
    }
    Block {
        height: 0,
        parent: None,
        miner: miner.id,
        timestamp: 0.0,
        total_fee: transactions.iter().map(TransactionRecord::fee).sum(),
        gas_used_total: block_limit - remaining,
        transactions,
        valid: !miner.produces_invalid,
    }
}
