use serde::{Deserialize, Serialize};

use crate::analytics::VerificationMode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::stats::Summary;
use crate::workload::CompiledWorkload;

use super::block::{build_block, MinerConfig, BLOCK_REWARD_ETH};
use super::chain::{fork_choice, BlockMeta, ChainView, NodeRole};

const MINING_STREAM: u64 = 0x6d69_6e65;
const BLOCK_STREAM: u64 = 0x626c_6f63;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub block_limit: u64,
    pub t_b: f64,
    pub miners: Vec<MinerConfig>,
    pub mode: VerificationMode,
    pub conflict_rate: f64,
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
    pub block_reward: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.miners.is_empty() {
            return bad("no miners".into());
        }
        if !(self.t_b > 0.0 && self.t_b.is_finite()) {
            return bad(format!("t_b must be positive, got {}", self.t_b));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(0.0..=1.0).contains(&self.conflict_rate) {
            return bad(format!("conflict rate {} outside [0, 1]", self.conflict_rate));
        }
        if self.block_limit == 0 {
            return bad("block limit must be positive".into());
        }
        if !(self.block_reward >= 0.0 && self.block_reward.is_finite()) {
            return bad("block reward must be >= 0".into());
        }
        let mut ids: Vec<usize> = self.miners.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("miner ids must be unique".into());
        }
        for m in &self.miners {
            if !(m.alpha > 0.0 && m.alpha <= 1.0) {
                return bad(format!("miner {} has alpha {} outside (0, 1]", m.id, m.alpha));
            }
            if m.processors == 0 {
                return bad(format!("miner {} needs at least one processor", m.id));
            }
            if m.produces_invalid && !m.verifies {
                return bad(format!("invalid producer {} must verify", m.id));
            }
        }
        let total: f64 = self.miners.iter().map(|m| m.alpha).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("hash power sums to {total}, expected 1"));
        }
        if self.miners.iter().all(|m| m.produces_invalid) {
            return bad("at least one miner must be honest".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerOutcome {
    pub id: usize,
    pub alpha: f64,
    pub verifies: bool,
    pub produces_invalid: bool,
    pub processors: u32,
    pub blocks_mined: u64,
    pub canonical_blocks: u64,
    pub fees: f64,
    /// Share of canonical fees.
    pub fee_fraction: f64,
    /// Share of canonical fees plus block rewards.
    pub reward_fraction: f64,
    pub relative_gain_pct: f64,
    /// Time spent verifying blocks from others.
    pub busy_time: f64,
    /// Time spent mining on a head whose ancestry is entirely valid.
    pub effective_time: f64,
    /// Expected share of canonical blocks given the time each miner
    /// actually spent mining on the valid chain.
    pub expected_share: f64,
    pub expected_gain_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub duration: f64,
    pub miners: Vec<MinerOutcome>,
    pub total_blocks: u64,
    pub canonical_blocks: u64,
    pub stale_blocks: u64,
    pub rejected_blocks: u64,
    pub canonical_fees: f64,
    pub block_reward: f64,
    /// Sequential verification time of every mined block.
    pub verification_time: Summary,
    /// Verification time per processor count in use (parallel mode only).
    pub parallel_verification_time: Vec<(u32, Summary)>,
}

impl SimResult {
    pub fn miner(&self, id: usize) -> Option<&MinerOutcome> {
        self.miners.iter().find(|m| m.id == id)
    }
}

fn draw_interval(rng: &mut rand_chacha::ChaCha8Rng, t_b: f64, alpha: f64) -> f64 {
    f64::standard_exp(rng) * t_b / alpha
}

/// Runs one seeded simulation. Each miner finds blocks as a Poisson process
/// of rate `alpha / t_b`; time spent verifying pauses that process.
pub fn run_simulation(config: &SimConfig, workload: &CompiledWorkload) -> Result<SimResult> {
    config.validate()?;
    let n = config.miners.len();

    let mut classes: Vec<u32> = match config.mode {
        VerificationMode::Sequential => vec![1],
        VerificationMode::Parallel => config.miners.iter().map(|m| m.processors).collect(),
    };
    classes.sort_unstable();
    classes.dedup();
    let class_of = |m: &MinerConfig| match config.mode {
        VerificationMode::Sequential => 0,
        VerificationMode::Parallel => classes.binary_search(&m.processors).expect("class exists"),
    };
    let roles: Vec<NodeRole> = config
        .miners
        .iter()
        .map(|m| NodeRole {
            verifies: m.verifies,
            produces_invalid: m.produces_invalid,
            cost_class: class_of(m),
        })
        .collect();
    let mut view = ChainView::new(&roles, classes.len());

    let mut rngs: Vec<_> = (0..n)
        .map(|i| seed::rng(config.seed, &[MINING_STREAM, i as u64]))
        .collect();
    let mut next_find: Vec<f64> = (0..n)
        .map(|i| draw_interval(&mut rngs[i], config.t_b, config.miners[i].alpha))
        .collect();
    let mut busy_until = vec![0.0f64; n];
    let mut busy_time = vec![0.0f64; n];
    let mut mined = vec![0u64; n];
    let mut off_chain_since: Vec<Option<f64>> = vec![None; n];
    let mut off_chain_time = vec![0.0f64; n];

    loop {
        let (finder, t) = next_find.iter().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, &t)| if t < best.1 { (i, t) } else { best },
        );
        if t > config.duration {
            break;
        }
        let miner = &config.miners[finder];
        let parent = view.head(finder);
        let block = build_block(
            miner,
            workload,
            config.block_limit,
            config.conflict_rate,
            seed::derive(config.seed, &[BLOCK_STREAM, finder as u64, mined[finder]]),
        );
        mined[finder] += 1;
        let costs = classes
            .iter()
            .map(|&p| block.verification_time(config.mode, p))
            .collect();
        let id = view.push_block(BlockMeta {
            parent: Some(parent),
            height: view.block(parent).height + 1,
            miner: Some(finder),
            timestamp: t,
            valid: block.valid,
            total_fee: block.total_fee,
            gas_used: block.gas_used_total,
            tx_count: block.transactions.len(),
            sequential_time: block.verification_time(VerificationMode::Sequential, 1),
            costs,
        })?;
        view.record_own(finder, id);
        next_find[finder] = t + draw_interval(&mut rngs[finder], config.t_b, miner.alpha);

        for j in (0..n).filter(|&j| j != finder) {
            let decision = fork_choice(&mut view, j, id)?;
            if decision.cost > 0.0 {
                let start = busy_until[j].max(t);
                busy_until[j] = start + decision.cost;
                busy_time[j] += decision.cost;
                next_find[j] += decision.cost;
            }
        }
        for j in 0..n {
            let off = view.is_tainted(view.head(j));
            match (off, off_chain_since[j]) {
                (true, None) => off_chain_since[j] = Some(t),
                (false, Some(since)) => {
                    off_chain_time[j] += t - since;
                    off_chain_since[j] = None;
                }
                _ => {}
            }
        }
    }

    let chain = view.canonical_chain();
    let mut canonical = vec![0u64; n];
    let mut fees = vec![0.0f64; n];
    for &b in &chain {
        let meta = view.block(b);
        let m = meta.miner.expect("genesis is never in the chain");
        canonical[m] += 1;
        fees[m] += meta.total_fee;
    }
    let canonical_fees: f64 = fees.iter().sum();
    let total_reward = canonical_fees + config.block_reward * chain.len() as f64;

    let effective: Vec<f64> = (0..n)
        .map(|i| {
            let busy = busy_time[i] - (busy_until[i] - config.duration).max(0.0);
            let off = off_chain_time[i] + off_chain_since[i].map_or(0.0, |s| config.duration - s);
            (config.duration - busy - off).max(0.0)
        })
        .collect();
    let weight = |i: usize| {
        let m = &config.miners[i];
        if m.produces_invalid {
            0.0
        } else {
            m.alpha * effective[i]
        }
    };
    let total_weight: f64 = (0..n).map(weight).sum();
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };

    let miners = config
        .miners
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let fee_fraction = ratio(fees[i], canonical_fees);
            let expected_share = ratio(weight(i), total_weight);
            MinerOutcome {
                id: m.id,
                alpha: m.alpha,
                verifies: m.verifies,
                produces_invalid: m.produces_invalid,
                processors: m.processors,
                blocks_mined: mined[i],
                canonical_blocks: canonical[i],
                fees: fees[i],
                fee_fraction,
                reward_fraction: ratio(fees[i] + config.block_reward * canonical[i] as f64, total_reward),
                relative_gain_pct: 100.0 * (fee_fraction - m.alpha) / m.alpha,
                busy_time: busy_time[i],
                effective_time: effective[i],
                expected_share,
                expected_gain_pct: 100.0 * (expected_share - m.alpha) / m.alpha,
            }
        })
        .collect();

    let mined_blocks = &view.blocks()[1..];
    let total_blocks = mined_blocks.len() as u64;
    let rejected_blocks = (1..view.blocks().len()).filter(|&b| view.is_tainted(b)).count() as u64;
    let canonical_blocks = chain.len() as u64;
    let sequential: Vec<f64> = mined_blocks.iter().map(|b| b.sequential_time).collect();
    let parallel_verification_time = match config.mode {
        VerificationMode::Sequential => Vec::new(),
        VerificationMode::Parallel => classes
            .iter()
            .enumerate()
            .map(|(c, &p)| {
                let times: Vec<f64> = mined_blocks.iter().map(|b| b.costs[c]).collect();
                (p, Summary::of(&times))
            })
            .collect(),
    };
    Ok(SimResult {
        seed: config.seed,
        duration: config.duration,
        miners,
        total_blocks,
        canonical_blocks,
        stale_blocks: total_blocks - rejected_blocks - canonical_blocks,
        rejected_blocks,
        canonical_fees,
        block_reward: config.block_reward,
        verification_time: Summary::of(&sequential),
        parallel_verification_time,
    })
}

/// One non-verifier with `alpha`, `verifiers` miners sharing `1 - alpha - invalid_rate`
/// equally, and an invalid producer when
/// `invalid_rate > 0`. Ids: non-verifier 0, verifiers 1.., producer last.
pub fn standard_miners(alpha: f64, verifiers: usize, invalid_rate: f64, processors: u32) -> Vec<MinerConfig> {
    let share = (1.0 - alpha - invalid_rate) / verifiers as f64;
    let mut miners = vec![MinerConfig {
        processors,
        ..MinerConfig::honest(0, alpha, false)
    }];
    miners.extend((1..=verifiers).map(|id| MinerConfig {
        processors,
        ..MinerConfig::honest(id, share, true)
    }));
    if invalid_rate > 0.0 {
        miners.push(MinerConfig {
            id: verifiers + 1,
            alpha: invalid_rate,
            verifies: true,
            processors,
            produces_invalid: true,
        });
    }
    miners
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            block_limit: crate::workload::DEFAULT_BLOCK_LIMIT,
            t_b: 12.42,
            miners: standard_miners(0.1, 9, 0.0, 1),
            mode: VerificationMode::Sequential,
            conflict_rate: 0.0,
            duration: 3600.0,
            seed: 0,
            block_reward: BLOCK_REWARD_ETH,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::tests::toy_workload;

    #[test]
    fn config_validation() {
        let ok = SimConfig::default();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.miners[0].alpha = 0.2;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.miners[3].id = 4;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.miners[0].produces_invalid = true;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.t_b = 0.0;
        assert!(c.validate().is_err());
        let w = toy_workload().compile();
        assert!(matches!(run_simulation(&c, &w), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn standard_profile_sums_to_one() {
        for (a, r) in [(0.1, 0.0), (0.05, 0.04), (0.4, 0.04)] {
            let m = standard_miners(a, 9, r, 4);
            let total: f64 = m.iter().map(|m| m.alpha).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(m.iter().filter(|m| m.produces_invalid).count(), usize::from(r > 0.0));
        }
    }

    #[test]
    fn block_accounting_adds_up() {
        let w = toy_workload().compile();
        let config = SimConfig {
            miners: standard_miners(0.1, 8, 0.1, 1),
            duration: 20_000.0,
            seed: 5,
            ..SimConfig::default()
        };
        let r = run_simulation(&config, &w).unwrap();
        assert_eq!(r.total_blocks, r.canonical_blocks + r.stale_blocks + r.rejected_blocks);
        assert!(r.rejected_blocks > 0);
        let fees: f64 = r.miners.iter().map(|m| m.fees).sum();
        assert_eq!(fees, r.canonical_fees);
        let sum: f64 = r.miners.iter().map(|m| m.fee_fraction).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let producer = r.miners.last().unwrap();
        assert_eq!((producer.canonical_blocks, producer.expected_share), (0, 0.0));
    }
}
