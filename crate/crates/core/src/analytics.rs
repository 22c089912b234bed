//! Closed-form expected rewards for verifying and non-verifying miners.
//!
//! A verifying miner loses mining time while it re-executes blocks produced
//! by others. Aggregated over the network this is a slowdown
//! `delta = (1 - alpha_V) * t_v` per block interval (sequential verification)
//! or `delta = (1 - alpha_V) * t_v * (c + (1 - c) / p)` when non-conflicting
//! transactions are spread over `p` processors. Verifiers then earn
//! `alpha_v * t_b / (t_b + delta)` and the surplus is shared by non-verifiers
//! in proportion to their hash power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the hash-power total of a profile.
pub const POWER_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerificationMode {
    #[default]
    Sequential,
    Parallel,
}

impl std::fmt::Display for VerificationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerificationMode::Sequential => "sequential",
            VerificationMode::Parallel => "parallel",
        })
    }
}

impl std::str::FromStr for VerificationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" | "seq" => Ok(VerificationMode::Sequential),
            "parallel" | "par" => Ok(VerificationMode::Parallel),
            other => Err(Error::param(format!("unknown verification mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerPower<T> {
    pub id: usize,
    pub alpha: T,
    pub verifies: bool,
}

/// Hash-power split of the network. Shares are in `(0, 1]` and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile<T> {
    miners: Vec<MinerPower<T>>,
}

impl<T: Scalar> PowerProfile<T> {
    pub fn new(miners: Vec<MinerPower<T>>) -> Result<Self> {
        if miners.is_empty() {
            return Err(Error::InvalidConfig("profile has no miners".into()));
        }
        for m in &miners {
            if !(m.alpha > T::zero() && m.alpha <= T::one()) {
                return Err(Error::InvalidConfig(format!(
                    "miner {} has hash power {} outside (0, 1]",
                    m.id, m.alpha
                )));
            }
        }
        let total: T = miners.iter().map(|m| m.alpha).sum();
        if (total - T::one()).abs() > T::lit(POWER_SUM_TOLERANCE).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::InvalidConfig(format!("hash powers sum to {total}, expected 1")));
        }
        Ok(Self { miners })
    }

    /// `n` miners with equal power where the first `non_verifiers` skip verification.
    pub fn uniform(n: usize, non_verifiers: usize) -> Result<Self> {
        if n == 0 || non_verifiers > n {
            return Err(Error::param("need n >= 1 and non_verifiers <= n"));
        }
        let alpha = T::one() / T::from_count(n);
        Self::new(
            (0..n)
                .map(|id| MinerPower {
                    id,
                    alpha,
                    verifies: id >= non_verifiers,
                })
                .collect(),
        )
    }

    /// One non-verifier with power `alpha`; the rest split equally among `verifiers` miners.
    pub fn single_nonverifier(alpha: T, verifiers: usize) -> Result<Self> {
        if verifiers == 0 {
            return Self::new(vec![MinerPower {
                id: 0,
                alpha,
                verifies: false,
            }]);
        }
        let rest = (T::one() - alpha) / T::from_count(verifiers);
        let mut miners = vec![MinerPower {
            id: 0,
            alpha,
            verifies: false,
        }];
        miners.extend((1..=verifiers).map(|id| MinerPower {
            id,
            alpha: rest,
            verifies: true,
        }));
        Self::new(miners)
    }

    pub fn miners(&self) -> &[MinerPower<T>] {
        &self.miners
    }

    /// Total hash power of verifying miners.
    pub fn verifier_power(&self) -> T {
        self.miners.iter().filter(|m| m.verifies).map(|m| m.alpha).sum()
    }

    /// Total hash power of non-verifying miners.
    pub fn nonverifier_power(&self) -> T {
        self.miners.iter().filter(|m| !m.verifies).map(|m| m.alpha).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationParams<T> {
    /// Mean block verification time, seconds.
    pub t_v: T,
    /// Block interval, seconds.
    pub t_b: T,
    pub conflict_rate: T,
    pub processors: u32,
}

impl<T: Scalar> VerificationParams<T> {
    pub fn sequential(t_v: T, t_b: T) -> Self {
        Self {
            t_v,
            t_b,
            conflict_rate: T::one(),
            processors: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_v >= T::zero()) {
            return Err(Error::param(format!("t_v must be >= 0, got {}", self.t_v)));
        }
        if !(self.t_b > T::zero()) {
            return Err(Error::param(format!("t_b must be > 0, got {}", self.t_b)));
        }
        if !(self.conflict_rate >= T::zero() && self.conflict_rate <= T::one()) {
            return Err(Error::param(format!(
                "conflict rate must lie in [0, 1], got {}",
                self.conflict_rate
            )));
        }
        if self.processors == 0 {
            return Err(Error::param("processor count must be >= 1"));
        }
        Ok(())
    }
}

pub fn seq_slowdown<T: Scalar>(profile: &PowerProfile<T>, t_v: T) -> T {
    // 1 - αV, summed directly so that an all-verifier profile gives exactly 0
    profile.nonverifier_power() * t_v
}

/// Fraction of blocks a verifier with power `alpha_v` keeps once slowed by `delta`.
pub fn verifier_reward<T: Scalar>(alpha_v: T, t_b: T, delta: T) -> T {
    alpha_v / (T::one() + delta / t_b)
}

/// Share of a non-verifier with power `alpha_s`, given the total non-verifier
/// power, the total verifier power and the verifiers' combined reward.
pub fn nonverifier_reward<T: Scalar>(
    alpha_s: T,
    nonverifier_power: T,
    verifier_power: T,
    verifier_reward_total: T,
) -> Result<T> {
    if !(nonverifier_power > T::zero()) {
        return Err(Error::param(
            "no non-verifying hash power; the non-verifier share is undefined",
        ));
    }
    Ok(alpha_s + alpha_s * (verifier_power - verifier_reward_total) / nonverifier_power)
}

/// Per-block-interval slowdown when non-conflicting transactions run on `p` processors.
pub fn par_slowdown<T: Scalar>(profile: &PowerProfile<T>, params: &VerificationParams<T>) -> T {
    let c = params.conflict_rate;
    let p = T::lit(params.processors.max(1) as f64);
    seq_slowdown(profile, params.t_v) * (c + (T::one() - c) / p)
}

pub fn slowdown<T: Scalar>(profile: &PowerProfile<T>, params: &VerificationParams<T>, mode: VerificationMode) -> T {
    match mode {
        VerificationMode::Sequential => seq_slowdown(profile, params.t_v),
        VerificationMode::Parallel => par_slowdown(profile, params),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow<T> {
    pub id: usize,
    pub alpha: T,
    pub verifies: bool,
    pub expected_fraction: T,
    pub relative_gain_pct: T,
}

/// Expected reward fraction of every miner in `profile`. One network-wide
/// slowdown applies to all verifiers.
pub fn reward_table<T: Scalar>(
    profile: &PowerProfile<T>,
    params: &VerificationParams<T>,
    mode: VerificationMode,
) -> Result<Vec<RewardRow<T>>> {
    params.validate()?;
    let delta = slowdown(profile, params, mode);
    let verifier_power = profile.verifier_power();
    let nonverifier_power = profile.nonverifier_power();
    let verifier_total: T = profile
        .miners()
        .iter()
        .filter(|m| m.verifies)
        .map(|m| verifier_reward(m.alpha, params.t_b, delta))
        .sum();

    profile
        .miners()
        .iter()
        .map(|m| {
            let expected = if m.verifies {
                verifier_reward(m.alpha, params.t_b, delta)
            } else {
                nonverifier_reward(m.alpha, nonverifier_power, verifier_power, verifier_total)?
            };
            Ok(RewardRow {
                id: m.id,
                alpha: m.alpha,
                verifies: m.verifies,
                expected_fraction: expected,
                relative_gain_pct: T::lit(100.0) * (expected - m.alpha) / m.alpha,
            })
        })
        .collect()
}
