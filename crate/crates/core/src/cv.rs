//! K-fold grid search over forest size and split budget.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::forest::{
    check_training_data, grow_forest_sorted, grow_tree, ForestParams, RandomForest, SortedSamples, TREE_STREAM,
};
use crate::scalar::Scalar;
use crate::seed;
use crate::stats::regression_metrics_unchecked;

const FOLD_STREAM: u64 = 0x666f_6c64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSearchOptions {
    pub trees: Vec<usize>,
    pub split_budgets: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridSearchOptions {
    fn default() -> Self {
        Self {
            trees: vec![10, 50, 100, 200, 500],
            split_budgets: vec![1, 10, 50, 150, 300],
            folds: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell<T> {
    pub trees: usize,
    pub split_budget: usize,
    pub mean_r2: T,
    pub fold_r2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult<T> {
    /// Ordered by tree-grid index, then split-grid index.
    pub cells: Vec<GridCell<T>>,
    pub best: ForestParams,
    pub model: RandomForest<T>,
}

impl<T: Scalar> GridSearchResult<T> {
    pub fn best_cell(&self) -> &GridCell<T> {
        self.cells
            .iter()
            .find(|c| c.trees == self.best.trees && c.split_budget == self.best.split_budget)
            .expect("best cell is always in the grid")
    }
}

/// Shuffled fold assignment: `folds` contiguous chunks of a seeded permutation.
fn fold_members(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, &[FOLD_STREAM]));
    (0..folds)
        .map(|f| order[f * n / folds..(f + 1) * n / folds].to_vec())
        .collect()
}

pub fn grid_search<T: Scalar>(xs: &[T], ys: &[T], opts: &GridSearchOptions) -> Result<GridSearchResult<T>> {
    check_training_data(xs, ys)?;
    if opts.folds < 2 {
        return Err(Error::param("need at least 2 folds"));
    }
    if xs.len() < opts.folds {
        return Err(Error::InsufficientSamples {
            needed: opts.folds,
            got: xs.len(),
        });
    }
    if opts.trees.is_empty() || opts.split_budgets.is_empty() {
        return Err(Error::param("grids must be non-empty"));
    }
    if opts.trees.contains(&0) || opts.split_budgets.contains(&0) {
        return Err(Error::param("grid values must be >= 1"));
    }

    let n = xs.len();
    let mut sorted_d = opts.trees.clone();
    sorted_d.sort_unstable();
    sorted_d.dedup();
    let max_d = *sorted_d.last().expect("non-empty");

    // r2[d_idx][s_idx][fold], d_idx indexing `sorted_d`
    let mut r2 = vec![vec![Vec::with_capacity(opts.folds); opts.split_budgets.len()]; sorted_d.len()];
    let members = fold_members(n, opts.folds, opts.seed);
    let mut in_test = vec![false; n];
    for (f, test) in members.iter().enumerate() {
        test.iter().for_each(|&i| in_test[i] = true);
        let (train_x, train_y): (Vec<T>, Vec<T>) = (0..n).filter(|&i| !in_test[i]).map(|i| (xs[i], ys[i])).unzip();
        test.iter().for_each(|&i| in_test[i] = false);
        let data = SortedSamples::new(&train_x, &train_y);
        let test_x: Vec<T> = test.iter().map(|&i| xs[i]).collect();
        let test_y: Vec<T> = test.iter().map(|&i| ys[i]).collect();
        let fold_seed = seed::derive(opts.seed, &[FOLD_STREAM, f as u64]);

        for (si, &s) in opts.split_budgets.iter().enumerate() {
            let mut sums = vec![T::zero(); test_x.len()];
            let mut next_d = 0;
            for t in 0..max_d {
                let mut rng = seed::rng(fold_seed, &[TREE_STREAM, t as u64]);
                let tree = grow_tree(&data, s, &mut rng);
                for (acc, &x) in sums.iter_mut().zip(&test_x) {
                    *acc = *acc + tree.predict(x);
                }
                if t + 1 == sorted_d[next_d] {
                    let d = T::from_count(t + 1);
                    let pred: Vec<T> = sums.iter().map(|&v| v / d).collect();
                    r2[next_d][si].push(regression_metrics_unchecked(&test_y, &pred).r2);
                    next_d += 1;
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(opts.trees.len() * opts.split_budgets.len());
    for &d in &opts.trees {
        let di = sorted_d.binary_search(&d).expect("grid value present");
        for (si, &s) in opts.split_budgets.iter().enumerate() {
            let fold_r2 = r2[di][si].clone();
            let mean_r2 = fold_r2.iter().copied().sum::<T>() / T::from_count(fold_r2.len());
            cells.push(GridCell {
                trees: d,
                split_budget: s,
                mean_r2,
                fold_r2,
            });
        }
    }
    // Highest mean R²; among ties the smaller forest, then the smaller budget.
    let best_cell = cells
        .iter()
        .reduce(|best, c| {
            let better = c.mean_r2 > best.mean_r2
                || (c.mean_r2 == best.mean_r2 && (c.trees, c.split_budget) < (best.trees, best.split_budget));
            if better {
                c
            } else {
                best
            }
        })
        .expect("non-empty grid");
    let best = ForestParams {
        trees: best_cell.trees,
        split_budget: best_cell.split_budget,
    };
    let model = grow_forest_sorted(&SortedSamples::new(xs, ys), best, opts.seed);
    Ok(GridSearchResult { cells, best, model })
}

/// Grid-searched forest refit on all data.
pub fn fit_rfr<T: Scalar>(
    xs: &[T],
    ys: &[T],
    d_grid: &[usize],
    s_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<RandomForest<T>> {
    let opts = GridSearchOptions {
        trees: d_grid.to_vec(),
        split_budgets: s_grid.to_vec(),
        folds,
        seed,
    };
    Ok(grid_search(xs, ys, &opts)?.model)
}
