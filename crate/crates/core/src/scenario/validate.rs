use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

use super::runner::CellReport;

/// Which simulated gain is compared with the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Share implied by the time each miner spent mining on the valid chain.
    #[default]
    Expected,
    /// Share of canonical fees actually collected.
    Realized,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Expected => "expected",
            Estimator::Realized => "realized",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(Estimator::Expected),
            "realized" => Ok(Estimator::Realized),
            other => Err(Error::param(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub config_id: usize,
    pub block_limit: u64,
    pub miner_id: usize,
    pub t_v: f64,
    pub closed_form_gain: f64,
    pub simulated_gain: f64,
    pub half_width: f64,
    /// closed form minus simulation; positive when the closed form overestimates.
    pub signed_deviation: f64,
    pub relative_deviation: f64,
    /// Fraction of runs whose simulated gain does not exceed the closed form.
    pub overestimate_share: f64,
    pub pass: bool,
}

impl fmt::Display for ValidationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] config {} miner {} limit {}: sim {:+.3}% ± {:.3} vs closed form {:+.3}% (t_v {:.3}s, deviation {:+.3}, {:.1}% relative, closed form >= sim in {:.0}% of runs)",
            if self.pass { "PASS" } else { "FAIL" },
            self.config_id,
            self.miner_id,
            self.block_limit,
            self.simulated_gain,
            self.half_width,
            self.closed_form_gain,
            self.t_v,
            self.signed_deviation,
            100.0 * self.relative_deviation,
            100.0 * self.overestimate_share,
        )
    }
}

/// Compares each non-verifier's simulated gain with the closed form; a cell
/// fails when the relative difference exceeds `tolerance`.
pub fn validate_cell(cell: &CellReport, tolerance: f64, estimator: Estimator) -> Vec<ValidationRow> {
    cell.non_verifiers()
        .filter_map(|m| {
            let closed = m.closed_form_gain?;
            let index = cell.config.miners.iter().position(|c| c.id == m.miner_id)?;
            let per_run: Vec<f64> = cell
                .runs
                .iter()
                .map(|r| match estimator {
                    Estimator::Expected => r.miners[index].expected_gain_pct,
                    Estimator::Realized => r.miners[index].relative_gain_pct,
                })
                .collect();
            let estimate = match estimator {
                Estimator::Expected => m.expected_gain,
                Estimator::Realized => m.realized_gain,
            };
            let deviation = closed - estimate.mean;
            let relative = if closed != 0.0 {
                deviation.abs() / closed.abs()
            } else if deviation == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Some(ValidationRow {
                config_id: cell.config_id,
                block_limit: cell.config.block_limit,
                miner_id: m.miner_id,
                t_v: cell.t_v,
                closed_form_gain: closed,
                simulated_gain: estimate.mean,
                half_width: estimate.half_width,
                signed_deviation: deviation,
                relative_deviation: relative,
                overestimate_share: per_run.iter().filter(|&&g| closed >= g).count() as f64 / per_run.len() as f64,
                pass: relative <= tolerance && (tolerance > 0.0 || deviation == 0.0),
            })
        })
        .collect()
}
