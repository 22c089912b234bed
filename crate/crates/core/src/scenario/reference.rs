use std::sync::OnceLock;

use crate::dataset::{generate_synthetic_dataset, Partition};
use crate::error::Result;
use crate::forest::{fit_forest, ForestParams};
use crate::gmm::{fit_gmm_with, GmmFitOptions};
use crate::workload::{FittedWorkload, DEFAULT_BLOCK_LIMIT};

pub const REFERENCE_SEED: u64 = 20_190_701;
const REFERENCE_SIZE: usize = 20_000;
const REFERENCE_FOREST: ForestParams = ForestParams {
    trees: 50,
    split_budget: 150,
};

/// Workload fitted to the synthetic execution set with fixed settings:
/// mixtures with up to four components, a 50-tree forest with 150 splits.
/// Used whenever a scenario does not name a fitted-model file.
pub fn build_reference_workload() -> Result<FittedWorkload> {
    let data = generate_synthetic_dataset(REFERENCE_SIZE, Partition::Execution, REFERENCE_SEED)?;
    let gmm = |seed| GmmFitOptions {
        k_min: 1,
        k_max: 4,
        seed,
        ..GmmFitOptions::default()
    };
    let gas = data.used_gas();
    Ok(FittedWorkload {
        gas_price_model: fit_gmm_with(&data.gas_prices(), &gmm(REFERENCE_SEED + 1))?,
        used_gas_model: fit_gmm_with(&gas, &gmm(REFERENCE_SEED + 2))?,
        cpu_time_model: fit_forest(&gas, &data.cpu_times(), REFERENCE_FOREST, REFERENCE_SEED + 3)?,
        block_limit: DEFAULT_BLOCK_LIMIT,
        seed: REFERENCE_SEED,
        partition: Partition::Execution,
    })
}

pub fn reference_workload() -> &'static FittedWorkload {
    static CELL: OnceLock<FittedWorkload> = OnceLock::new();
    CELL.get_or_init(|| build_reference_workload().expect("reference workload fits"))
}
