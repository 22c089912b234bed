//! Fitted transaction workload: two mixtures and a CPU-time forest, and the
//! sampler that turns them into synthetic transactions.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cv::{grid_search, GridCell, GridSearchOptions};
use crate::dataset::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::forest::{ForestParams, RandomForest, StepPredictor};
use crate::gmm::{fit_gmm_with, Criterion, GaussianMixture, GmmFitOptions};
use crate::seed;
use crate::stats::{regression_metrics, RegressionMetrics};

pub const DEFAULT_BLOCK_LIMIT: u64 = 8_000_000;
/// Intrinsic gas of the cheapest possible transaction.
pub const MIN_TX_GAS: u64 = 21_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub used_gas: u64,
    pub gas_limit: u64,
    /// Ether per gas unit.
    pub gas_price: f64,
    /// Seconds.
    pub cpu_time: f64,
    #[serde(default)]
    pub conflicting: bool,
}

impl TransactionRecord {
    pub fn fee(&self) -> f64 {
        self.used_gas as f64 * self.gas_price
    }

    /// Returns the offending field and a description on failure.
    pub fn check(&self, block_limit: u64) -> Result<(), (&'static str, String)> {
        if self.used_gas < 1 {
            return Err(("used_gas", "must be >= 1".into()));
        }
        if self.gas_limit < self.used_gas {
            return Err((
                "gas_limit",
                format!("{} is below used_gas {}", self.gas_limit, self.used_gas),
            ));
        }
        if self.gas_limit > block_limit {
            return Err((
                "gas_limit",
                format!("{} exceeds the block limit {block_limit}", self.gas_limit),
            ));
        }
        if !(self.gas_price > 0.0 && self.gas_price.is_finite()) {
            return Err(("gas_price", format!("must be positive, got {}", self.gas_price)));
        }
        if !(self.cpu_time >= 0.0 && self.cpu_time.is_finite()) {
            return Err(("cpu_time_s", format!("must be >= 0, got {}", self.cpu_time)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedWorkload {
    pub gas_price_model: GaussianMixture<f64>,
    pub used_gas_model: GaussianMixture<f64>,
    pub cpu_time_model: RandomForest<f64>,
    pub block_limit: u64,
    pub seed: u64,
    pub partition: Partition,
}

impl FittedWorkload {
    pub fn validate(&self) -> Result<()> {
        if self.block_limit == 0 {
            return Err(Error::param("workload block limit must be > 0"));
        }
        self.gas_price_model.validate()?;
        self.used_gas_model.validate()?;
        self.cpu_time_model.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn compile(&self) -> CompiledWorkload {
        CompiledWorkload {
            gas_price: self.gas_price_model.clone(),
            used_gas: self.used_gas_model.clone(),
            cpu_time: self.cpu_time_model.compile(),
            block_limit: self.block_limit,
        }
    }
}

/// A workload with the forest flattened for fast repeated sampling.
#[derive(Debug, Clone)]
pub struct CompiledWorkload {
    gas_price: GaussianMixture<f64>,
    used_gas: GaussianMixture<f64>,
    cpu_time: StepPredictor<f64>,
    block_limit: u64,
}

impl CompiledWorkload {
    pub fn block_limit(&self) -> u64 {
        self.block_limit
    }

    /// One transaction whose gas figures never exceed `cap`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, cap: u64, conflict_rate: f64) -> TransactionRecord {
        let gas_price = self.gas_price.draw(rng);
        let floor = MIN_TX_GAS.min(cap).max(1);
        let raw = self.used_gas.draw(rng).round();
        let used_gas = if raw >= cap as f64 {
            cap.max(floor)
        } else {
            (raw as u64).clamp(floor, cap.max(floor))
        };
        let gas_limit = rng.random_range(used_gas..=cap.max(used_gas));
        let cpu_time = self.cpu_time.predict(used_gas as f64).max(0.0);
        let conflicting = rng.random::<f64>() < conflict_rate;
        TransactionRecord {
            used_gas,
            gas_limit,
            gas_price,
            cpu_time,
            conflicting,
        }
    }
}

pub fn predict_cpu_time(model: &RandomForest<f64>, used_gas: f64) -> f64 {
    model.predict(used_gas).max(0.0)
}

const SAMPLE_STREAM: u64 = 0x7361_6d70;

pub fn sample_transactions(
    workload: &FittedWorkload,
    n: usize,
    conflict_rate: f64,
    seed: u64,
) -> Result<Vec<TransactionRecord>> {
    if n == 0 {
        return Err(Error::param("sample size must be >= 1"));
    }
    if !(0.0..=1.0).contains(&conflict_rate) {
        return Err(Error::param("conflict rate must be in [0, 1]"));
    }
    workload.validate()?;
    let compiled = workload.compile();
    let mut rng = seed::rng(seed, &[SAMPLE_STREAM]);
    Ok((0..n)
        .map(|_| compiled.draw(&mut rng, workload.block_limit, conflict_rate))
        .collect())
}

#[derive(Debug, Clone)]
pub struct WorkloadFitOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub criterion: Criterion,
    pub grid: GridSearchOptions,
    /// Fraction of records held out from the forest for test metrics.
    pub test_fraction: f64,
    /// Grid search runs on at most this many training records; the chosen
    /// parameters are then refit on the whole training split.
    pub cv_sample_limit: Option<usize>,
    pub block_limit: u64,
    pub seed: u64,
}

impl Default for WorkloadFitOptions {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 10,
            criterion: Criterion::Bic,
            grid: GridSearchOptions::default(),
            test_fraction: 0.2,
            cv_sample_limit: Some(5_000),
            block_limit: DEFAULT_BLOCK_LIMIT,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkloadFitReport {
    pub workload: FittedWorkload,
    pub cells: Vec<GridCell<f64>>,
    pub best: ForestParams,
    pub train: RegressionMetrics<f64>,
    pub test: Option<RegressionMetrics<f64>>,
    pub train_size: usize,
    pub test_size: usize,
}

const SPLIT_STREAM: u64 = 0x7370_6c74;
const CV_SUBSAMPLE_STREAM: u64 = 0x6376_7373;

/// Fits both mixtures on every record and the CPU-time forest on a seeded
/// training split, reporting train and held-out metrics.
pub fn fit_workload(dataset: &Dataset, opts: &WorkloadFitOptions) -> Result<WorkloadFitReport> {
    if !(0.0..1.0).contains(&opts.test_fraction) {
        return Err(Error::param("test fraction must be in [0, 1)"));
    }
    let records = &dataset.records;
    let prices: Vec<f64> = records.iter().map(|r| r.gas_price).collect();
    let gas: Vec<f64> = records.iter().map(|r| r.used_gas as f64).collect();
    let cpu: Vec<f64> = records.iter().map(|r| r.cpu_time).collect();

    let n = records.len();
    let k_max = opts.k_max.min(n);
    let gmm_opts = |label: u64| GmmFitOptions {
        k_min: opts.k_min,
        k_max,
        criterion: opts.criterion,
        seed: seed::derive(opts.seed, &[label]),
        ..GmmFitOptions::default()
    };
    let gas_price_model = fit_gmm_with(&prices, &gmm_opts(1))?;
    let used_gas_model = fit_gmm_with(&gas, &gmm_opts(2))?;

    let mut order: Vec<usize> = (0..n).collect();
    let test_size = (opts.test_fraction * n as f64).round() as usize;
    shuffle(&mut order, seed::derive(opts.seed, &[SPLIT_STREAM]));
    let (test_idx, train_idx) = order.split_at(test_size);
    let pick = |idx: &[usize], v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let (train_x, train_y) = (pick(train_idx, &gas), pick(train_idx, &cpu));

    let grid = GridSearchOptions {
        seed: seed::derive(opts.seed, &[3]),
        ..opts.grid.clone()
    };
    let (cells, best) = match opts.cv_sample_limit {
        Some(limit) if train_x.len() > limit => {
            let mut sub: Vec<usize> = (0..train_x.len()).collect();
            shuffle(&mut sub, seed::derive(opts.seed, &[CV_SUBSAMPLE_STREAM]));
            sub.truncate(limit);
            let result = grid_search(&pick(&sub, &train_x), &pick(&sub, &train_y), &grid)?;
            (result.cells, result.best)
        }
        _ => {
            let result = grid_search(&train_x, &train_y, &grid)?;
            (result.cells, result.best)
        }
    };
    let cpu_time_model = crate::forest::fit_forest(&train_x, &train_y, best, grid.seed)?;

    let compiled = cpu_time_model.compile();
    let predict = |xs: &[f64]| xs.iter().map(|&x| compiled.predict(x).max(0.0)).collect::<Vec<_>>();
    let train = regression_metrics(&train_y, &predict(&train_x))?;
    let test = if test_idx.len() >= 2 {
        let (tx, ty) = (pick(test_idx, &gas), pick(test_idx, &cpu));
        Some(regression_metrics(&ty, &predict(&tx))?)
    } else {
        None
    };

    let workload = FittedWorkload {
        gas_price_model,
        used_gas_model,
        cpu_time_model,
        block_limit: opts.block_limit,
        seed: opts.seed,
        partition: dataset.partition,
    };
    workload.validate()?;
    Ok(WorkloadFitReport {
        workload,
        cells,
        best,
        train,
        test,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
    })
}

fn shuffle(v: &mut [usize], seed: u64) {
    use rand::seq::SliceRandom;
    v.shuffle(&mut seed::rng(seed, &[]));
}
