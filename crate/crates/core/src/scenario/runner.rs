use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analytics::{reward_table, MinerPower, PowerProfile, VerificationParams};
use crate::error::{Error, Result};
use crate::sim::{run_simulation, SimResult};
use crate::stats::Summary;
use crate::workload::{CompiledWorkload, FittedWorkload};

use super::config::{ScenarioConfig, FINGERPRINT_HEADER};
use super::reference::reference_workload;

pub const RESULTS_HEADER: [&str; 7] = [
    "config_id",
    "seed",
    "miner_id",
    "alpha",
    "verifies",
    "fee_fraction",
    "relative_gain_pct",
];

/// Mean and 95% confidence half-width (Student t) of run-level values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub runs: usize,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let s = Summary::of(values);
        let half_width = if s.count < 2 {
            f64::NAN
        } else {
            let t = StudentsT::new(0.0, 1.0, (s.count - 1) as f64)
                .expect("degrees of freedom >= 1")
                .inverse_cdf(0.975);
            t * s.sd / (s.count as f64).sqrt()
        };
        Self {
            mean: s.mean,
            half_width,
            runs: s.count,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinerSummary {
    pub miner_id: usize,
    pub alpha: f64,
    pub verifies: bool,
    pub produces_invalid: bool,
    pub realized_gain: Estimate,
    pub expected_gain: Estimate,
    pub closed_form_gain: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub config_id: usize,
    pub config: ScenarioConfig,
    pub runs: Vec<SimResult>,
    /// Mean sequential verification time over every block of every run.
    pub t_v: f64,
    pub verification_time: Summary,
    pub miners: Vec<MinerSummary>,
}

impl CellReport {
    pub fn miner(&self, id: usize) -> Option<&MinerSummary> {
        self.miners.iter().find(|m| m.miner_id == id)
    }

    /// Non-verifying honest miners, the ones the closed form makes claims about.
    pub fn non_verifiers(&self) -> impl Iterator<Item = &MinerSummary> {
        self.miners.iter().filter(|m| !m.verifies)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
}

/// Loads each distinct workload file once per sweep.
#[derive(Default)]
pub struct WorkloadCache {
    loaded: HashMap<PathBuf, CompiledWorkload>,
    reference: Option<CompiledWorkload>,
}

impl WorkloadCache {
    pub fn get(&mut self, path: Option<&Path>) -> Result<&CompiledWorkload> {
        match path {
            None => Ok(self.reference.get_or_insert_with(|| reference_workload().compile())),
            Some(p) => {
                if !self.loaded.contains_key(p) {
                    let w = FittedWorkload::load(p)?;
                    self.loaded.insert(p.to_path_buf(), w.compile());
                }
                Ok(&self.loaded[p])
            }
        }
    }
}

/// Closed-form relative gain for each miner, treating an invalid producer
/// as an ordinary verifier (the closed form has no notion of invalid blocks).
pub fn closed_form_gains(config: &ScenarioConfig, t_v: f64) -> Result<Vec<Option<f64>>> {
    let profile = PowerProfile::new(
        config
            .miners
            .iter()
            .map(|m| MinerPower {
                id: m.id,
                alpha: m.alpha,
                verifies: m.verifies,
            })
            .collect(),
    )?;
    if profile.nonverifier_power() <= 0.0 {
        return Ok(vec![Some(0.0); config.miners.len()]);
    }
    let params = VerificationParams {
        t_v,
        t_b: config.t_b,
        conflict_rate: config.c,
        processors: config.p,
    };
    Ok(reward_table(&profile, &params, config.mode)?
        .into_iter()
        .map(|r| Some(r.relative_gain_pct))
        .collect())
}

pub fn run_cell(config_id: usize, config: &ScenarioConfig, workload: &CompiledWorkload) -> Result<CellReport> {
    config.validate()?;
    let runs = config
        .seeds()
        .map(|seed| {
            run_simulation(&config.sim_config(seed), workload).map_err(|e| Error::RunFailed {
                config_id,
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut sum, mut count) = (0.0, 0u64);
    let mut all_times = Vec::new();
    for r in &runs {
        sum += r.verification_time.mean * r.verification_time.count as f64;
        count += r.verification_time.count as u64;
        all_times.push(r.verification_time);
    }
    let t_v = if count > 0 { sum / count as f64 } else { 0.0 };
    let verification_time = pooled_summary(&all_times);
    let closed = closed_form_gains(config, t_v)?;

    let miners = config
        .miners
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let realized: Vec<f64> = runs.iter().map(|r| r.miners[i].relative_gain_pct).collect();
            let expected: Vec<f64> = runs.iter().map(|r| r.miners[i].expected_gain_pct).collect();
            MinerSummary {
                miner_id: m.id,
                alpha: m.alpha,
                verifies: m.verifies,
                produces_invalid: m.produces_invalid,
                realized_gain: Estimate::of(&realized),
                expected_gain: Estimate::of(&expected),
                closed_form_gain: closed[i],
            }
        })
        .collect();
    Ok(CellReport {
        config_id,
        config: config.clone(),
        runs,
        t_v,
        verification_time,
        miners,
    })
}

/// Combines per-run summaries into one over all blocks.
fn pooled_summary(parts: &[Summary]) -> Summary {
    let parts: Vec<&Summary> = parts.iter().filter(|s| s.count > 0).collect();
    let n: usize = parts.iter().map(|s| s.count).sum();
    if n == 0 {
        return Summary::default();
    }
    let mean = parts.iter().map(|s| s.mean * s.count as f64).sum::<f64>() / n as f64;
    let ss: f64 = parts
        .iter()
        .map(|s| s.sd * s.sd * (s.count as f64 - 1.0) + s.count as f64 * (s.mean - mean).powi(2))
        .sum();
    // The pooled median is approximated by the count-weighted mean of run medians.
    let median = parts.iter().map(|s| s.median * s.count as f64).sum::<f64>() / n as f64;
    Summary {
        count: n,
        mean,
        sd: if n > 1 { (ss / (n as f64 - 1.0)).sqrt() } else { 0.0 },
        min: parts.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
        max: parts.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
        median,
    }
}

pub fn run_sweep(configs: &[ScenarioConfig]) -> Result<SweepReport> {
    let mut cache = WorkloadCache::default();
    let cells = configs
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let w = cache.get(c.workload.as_deref())?;
            run_cell(id, c, w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { cells })
}

fn fmt_f64(x: f64) -> String {
    x.to_string()
}

impl SweepReport {
    /// One row per configuration, seed and miner.
    pub fn write_results<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = RESULTS_HEADER.to_vec();
        header.extend([
            "expected_gain_pct",
            "reward_fraction",
            "canonical_blocks",
            "produces_invalid",
        ]);
        header.extend(FINGERPRINT_HEADER);
        w.write_record(&header)?;
        for cell in &self.cells {
            let fp = cell.config.fingerprint();
            for run in &cell.runs {
                for m in &run.miners {
                    let mut row = vec![
                        cell.config_id.to_string(),
                        run.seed.to_string(),
                        m.id.to_string(),
                        fmt_f64(m.alpha),
                        m.verifies.to_string(),
                        fmt_f64(m.fee_fraction),
                        fmt_f64(m.relative_gain_pct),
                        fmt_f64(m.expected_gain_pct),
                        fmt_f64(m.reward_fraction),
                        m.canonical_blocks.to_string(),
                        m.produces_invalid.to_string(),
                    ];
                    row.extend(fp.iter().cloned());
                    w.write_record(&row)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<results>", e))
    }

    /// One row per configuration and miner: run means with 95% half-widths,
    /// the closed-form gain and verification-time statistics.
    pub fn write_summary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "config_id",
            "miner_id",
            "alpha",
            "verifies",
            "produces_invalid",
            "runs",
            "seed_first",
            "seed_last",
            "gain_mean",
            "gain_ci95",
            "expected_gain_mean",
            "expected_gain_ci95",
            "closed_form_gain",
            "tv_mean",
            "tv_sd",
            "tv_min",
            "tv_median",
            "tv_max",
        ];
        header.extend(FINGERPRINT_HEADER);
        w.write_record(&header)?;
        for cell in &self.cells {
            let fp = cell.config.fingerprint();
            let seeds = cell.config.seeds();
            let tv = &cell.verification_time;
            for m in &cell.miners {
                let mut row = vec![
                    cell.config_id.to_string(),
                    m.miner_id.to_string(),
                    fmt_f64(m.alpha),
                    m.verifies.to_string(),
                    m.produces_invalid.to_string(),
                    m.realized_gain.runs.to_string(),
                    seeds.start.to_string(),
                    (seeds.end - 1).to_string(),
                    fmt_f64(m.realized_gain.mean),
                    fmt_f64(m.realized_gain.half_width),
                    fmt_f64(m.expected_gain.mean),
                    fmt_f64(m.expected_gain.half_width),
                    m.closed_form_gain.map_or_else(String::new, fmt_f64),
                    fmt_f64(tv.mean),
                    fmt_f64(tv.sd),
                    fmt_f64(tv.min),
                    fmt_f64(tv.median),
                    fmt_f64(tv.max),
                ];
                row.extend(fp.iter().cloned());
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<summary>", e))
    }
}
