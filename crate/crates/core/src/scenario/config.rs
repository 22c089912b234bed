use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::VerificationMode;
use crate::error::{Error, Result};
use crate::sim::{standard_miners, MinerConfig, SimConfig, BLOCK_REWARD_ETH};

pub const DEFAULT_T_B: f64 = 12.42;

/// One experiment cell. `p` applies to every miner; `workload` names a
/// fitted-model file, and the built-in reference workload is used without one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub block_limit: u64,
    #[serde(default = "default_t_b")]
    pub t_b: f64,
    pub miners: Vec<MinerConfig>,
    #[serde(default)]
    pub mode: VerificationMode,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_p")]
    pub p: u32,
    #[serde(default)]
    pub invalid_rate: f64,
    pub sim_duration: f64,
    pub runs: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<PathBuf>,
}

fn default_t_b() -> f64 {
    DEFAULT_T_B
}

fn default_p() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<ScenarioConfig>),
    One(Box<ScenarioConfig>),
}

impl ScenarioConfig {
    /// Ten miners: one non-verifier with `alpha`, nine verifiers sharing the
    /// rest equally, plus an invalid producer holding `invalid_rate`.
    pub fn standard(block_limit: u64, alpha: f64, invalid_rate: f64) -> Self {
        Self {
            block_limit,
            t_b: DEFAULT_T_B,
            miners: standard_miners(alpha, 9, invalid_rate, 1),
            mode: VerificationMode::Sequential,
            c: 0.0,
            p: 1,
            invalid_rate,
            sim_duration: 3600.0,
            runs: 20,
            base_seed: 0,
            workload: None,
        }
    }

    pub fn parallel(mut self, c: f64, p: u32) -> Self {
        self.mode = VerificationMode::Parallel;
        self.c = c;
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.runs < 1 {
            return bad("runs must be >= 1".into());
        }
        if !(0.0..0.5).contains(&self.invalid_rate) {
            return bad(format!("invalid_rate {} outside [0, 0.5)", self.invalid_rate));
        }
        if self.p < 1 {
            return bad("p must be >= 1".into());
        }
        let producers: Vec<&MinerConfig> = self.miners.iter().filter(|m| m.produces_invalid).collect();
        if self.invalid_rate > 0.0 {
            if producers.len() != 1 {
                return bad(format!(
                    "invalid_rate > 0 needs exactly one invalid producer, found {}",
                    producers.len()
                ));
            }
            if (producers[0].alpha - self.invalid_rate).abs() > 1e-9 {
                return bad(format!(
                    "invalid producer has alpha {} but invalid_rate is {}",
                    producers[0].alpha, self.invalid_rate
                ));
            }
        } else if !producers.is_empty() {
            return bad("invalid producer present but invalid_rate is 0".into());
        }
        self.sim_config(self.base_seed).validate()
    }

    pub fn seeds(&self) -> std::ops::Range<u64> {
        self.base_seed..self.base_seed + self.runs as u64
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            block_limit: self.block_limit,
            t_b: self.t_b,
            miners: self
                .miners
                .iter()
                .map(|m| MinerConfig {
                    processors: self.p,
                    ..m.clone()
                })
                .collect(),
            mode: self.mode,
            conflict_rate: self.c,
            duration: self.sim_duration,
            seed,
            block_reward: BLOCK_REWARD_ETH,
        }
    }

    /// Every field, flattened into CSV columns (see [`FINGERPRINT_HEADER`]).
    pub fn fingerprint(&self) -> Vec<String> {
        let mut miners = String::new();
        for (i, m) in self.miners.iter().enumerate() {
            if i > 0 {
                miners.push(';');
            }
            let _ = write!(
                miners,
                "{}:{}:{}:{}",
                m.id,
                m.alpha,
                if m.verifies { "v" } else { "n" },
                if m.produces_invalid { "x" } else { "h" }
            );
        }
        vec![
            self.block_limit.to_string(),
            self.t_b.to_string(),
            self.mode.to_string(),
            self.c.to_string(),
            self.p.to_string(),
            self.invalid_rate.to_string(),
            self.sim_duration.to_string(),
            self.runs.to_string(),
            self.base_seed.to_string(),
            self.workload
                .as_ref()
                .map_or_else(|| "reference".to_string(), |p| p.display().to_string()),
            miners,
        ]
    }
}

pub const FINGERPRINT_HEADER: [&str; 11] = [
    "block_limit",
    "t_b",
    "mode",
    "c",
    "p",
    "invalid_rate",
    "sim_duration",
    "runs",
    "base_seed",
    "workload",
    "miners",
];

/// Parses a single config object or a list of them and validates each.
pub fn parse_configs(text: &str) -> Result<Vec<ScenarioConfig>> {
    let configs = match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::Many(v)) => v,
        Ok(OneOrMany::One(c)) => vec![*c],
        // untagged errors are vague; re-parse as a single object for a precise message
        Err(_) => match serde_json::from_str::<ScenarioConfig>(text) {
            Ok(c) => vec![c],
            Err(e) => {
                return Err(match serde_json::from_str::<Vec<ScenarioConfig>>(text) {
                    Err(list_err) if text.trim_start().starts_with('[') => list_err.into(),
                    _ => e.into(),
                })
            }
        },
    };
    if configs.is_empty() {
        return Err(Error::InvalidConfig("no configurations".into()));
    }
    for (i, c) in configs.iter().enumerate() {
        c.validate()
            .map_err(|e| Error::InvalidConfig(format!("configuration {i}: {e}")))?;
    }
    Ok(configs)
}

pub fn load_configs(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut configs = parse_configs(&text)?;
    // relative workload paths are resolved against the config file
    if let Some(dir) = path.parent() {
        for c in &mut configs {
            if let Some(w) = &c.workload {
                if w.is_relative() {
                    c.workload = Some(dir.join(w));
                }
            }
        }
    }
    Ok(configs)
}
