use serde::Serialize;

use crate::analytics::{reward_table, PowerProfile, RewardRow, VerificationMode, VerificationParams};
use crate::error::Result;
use crate::seed;
use crate::sim::{build_block, MinerConfig};
use crate::workload::CompiledWorkload;

pub const BLOCK_LIMITS: [u64; 5] = [8_000_000, 16_000_000, 32_000_000, 64_000_000, 128_000_000];

/// Published mean block verification times (seconds) for [`BLOCK_LIMITS`].
pub const PUBLISHED_T_V: [f64; 5] = [0.23, 0.46, 0.87, 1.56, 3.18];

pub fn published_t_v() -> Vec<(u64, f64)> {
    BLOCK_LIMITS.into_iter().zip(PUBLISHED_T_V).collect()
}

/// Mean sequential verification time of `blocks` freshly built blocks at each limit.
pub fn measured_t_v(workload: &CompiledWorkload, limits: &[u64], blocks: usize, seed: u64) -> Vec<(u64, f64)> {
    let miner = MinerConfig::honest(0, 1.0, true);
    limits
        .iter()
        .map(|&limit| {
            let total: f64 = (0..blocks as u64)
                .map(|k| {
                    build_block(&miner, workload, limit, 0.0, seed::derive(seed, &[limit, k]))
                        .verification_time(VerificationMode::Sequential, 1)
                })
                .sum();
            (limit, total / blocks.max(1) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticRow {
    pub block_limit: u64,
    pub t_v: f64,
    pub rows: Vec<RewardRow<f64>>,
}

pub fn analytic_sweep(
    profile: &PowerProfile<f64>,
    t_b: f64,
    mode: VerificationMode,
    conflict_rate: f64,
    processors: u32,
    t_v_table: &[(u64, f64)],
) -> Result<Vec<AnalyticRow>> {
    t_v_table
        .iter()
        .map(|&(block_limit, t_v)| {
            let params = VerificationParams {
                t_v,
                t_b,
                conflict_rate,
                processors,
            };
            Ok(AnalyticRow {
                block_limit,
                t_v,
                rows: reward_table(profile, &params, mode)?,
            })
        })
        .collect()
}

pub fn write_analytic_csv<W: std::io::Write>(rows: &[AnalyticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "block_limit",
        "t_v",
        "miner_id",
        "alpha",
        "verifies",
        "expected_fraction",
        "relative_gain_pct",
    ])?;
    for r in rows {
        for m in &r.rows {
            w.write_record([
                r.block_limit.to_string(),
                r.t_v.to_string(),
                m.id.to_string(),
                m.alpha.to_string(),
                m.verifies.to_string(),
                m.expected_fraction.to_string(),
                m.relative_gain_pct.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| crate::error::Error::io("<analytic>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_sweep_points() {
        let profile = PowerProfile::single_nonverifier(0.1, 9).unwrap();
        let rows = analytic_sweep(&profile, 12.42, VerificationMode::Sequential, 0.0, 1, &published_t_v()).unwrap();
        let gains: Vec<f64> = rows.iter().map(|r| r.rows[0].relative_gain_pct).collect();
        assert!(gains.windows(2).all(|w| w[0] < w[1]));
        assert!((gains[4] - 22.0).abs() / 22.0 < 0.15);

        let small = PowerProfile::single_nonverifier(0.05, 9).unwrap();
        let rows = analytic_sweep(&small, 12.42, VerificationMode::Sequential, 0.0, 1, &published_t_v()).unwrap();
        assert!((rows[0].rows[0].relative_gain_pct - 1.7).abs() / 1.7 < 0.15);
    }
}
