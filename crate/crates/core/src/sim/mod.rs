//! Event-driven mining simulator with block verification costs and an
//! optional invalid-block producer.

mod block;
mod chain;
mod engine;
mod schedule;

pub use block::{build_block, Block, MinerConfig, BLOCK_REWARD_ETH};
pub use chain::{fork_choice, BlockMeta, ChainView, Decision, NodeRole, Verdict};
pub use engine::{run_simulation, standard_miners, MinerOutcome, SimConfig, SimResult};
pub use schedule::{lpt_makespan, verification_time};
