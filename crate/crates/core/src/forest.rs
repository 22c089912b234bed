//! Random forest regression on a single feature.
//!
//! Trees are grown on bootstrap resamples. Splits are chosen best-first by
//! squared-error reduction until the per-tree split budget runs out or no
//! split improves the fit. Because there is only one feature, every node
//! covers a contiguous run of the x-sorted training data, which keeps growth
//! linear in the node size.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node<T> {
    /// `x <= threshold` goes left.
    Split {
        threshold: T,
        left: u32,
        right: u32,
    },
    Leaf {
        value: T,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn leaf(value: T) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Builds a tree from an explicit node list rooted at index 0.
    pub fn from_nodes(nodes: Vec<Node<T>>) -> Result<Self> {
        let tree = Self { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::param("tree has no nodes"));
        }
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(Error::param("tree node reachable twice"));
            }
            seen[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                for child in [left as usize, right as usize] {
                    if child >= n || child <= i {
                        return Err(Error::param("tree child index out of order"));
                    }
                    stack.push(child);
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn predict(&self, x: T) -> T {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { threshold, left, right } => i = if x <= threshold { left } else { right } as usize,
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = T> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(*value),
            Node::Split { .. } => None,
        })
    }

    /// Thresholds in ascending order and the leaf value of each interval
    /// `(-inf, t0], (t0, t1], ..., (t_last, inf)`.
    fn step_function(&self) -> (Vec<T>, Vec<T>) {
        let mut bounds = Vec::new();
        let mut values = Vec::new();
        // in-order traversal
        let mut stack: Vec<(usize, bool)> = vec![(0, false)];
        while let Some((i, expanded)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { value } => values.push(value),
                Node::Split { threshold, left, right } => {
                    if expanded {
                        bounds.push(threshold);
                    } else {
                        stack.push((right as usize, false));
                        stack.push((i, true));
                        stack.push((left as usize, false));
                    }
                }
            }
        }
        (bounds, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    pub split_budget: usize,
    pub trees: Vec<RegressionTree<T>>,
}

impl<T: Scalar> RandomForest<T> {
    pub fn new(trees: Vec<RegressionTree<T>>, split_budget: usize) -> Result<Self> {
        let forest = Self { split_budget, trees };
        forest.validate()?;
        Ok(forest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::param("forest has no trees"));
        }
        if self.split_budget == 0 {
            return Err(Error::param("split budget must be >= 1"));
        }
        for tree in &self.trees {
            tree.validate()?;
            if tree.split_count() > self.split_budget {
                return Err(Error::param(format!(
                    "tree has {} splits, budget is {}",
                    tree.split_count(),
                    self.split_budget
                )));
            }
        }
        Ok(())
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Mean of the tree predictions.
    pub fn predict(&self, x: T) -> T {
        let mut sum = T::zero();
        for tree in &self.trees {
            sum = sum + tree.predict(x);
        }
        sum / T::from_count(self.trees.len())
    }

    /// Flattens the ensemble into one step function that returns exactly
    /// what [`RandomForest::predict`] returns, in `O(log splits)` per query.
    pub fn compile(&self) -> StepPredictor<T> {
        let steps: Vec<(Vec<T>, Vec<T>)> = self.trees.iter().map(|t| t.step_function()).collect();
        let mut thresholds: Vec<T> = steps.iter().flat_map(|(b, _)| b.iter().copied()).collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        thresholds.dedup();

        let d = T::from_count(self.trees.len());
        let mut cursor = vec![0usize; steps.len()];
        let mut values = Vec::with_capacity(thresholds.len() + 1);
        for idx in 0..=thresholds.len() {
            let rep = thresholds.get(idx).copied();
            let mut sum = T::zero();
            for (c, (bounds, leaf)) in cursor.iter_mut().zip(&steps) {
                match rep {
                    Some(x) => {
                        while *c < bounds.len() && bounds[*c] < x {
                            *c += 1;
                        }
                    }
                    None => *c = bounds.len(),
                }
                sum = sum + leaf[*c];
            }
            values.push(sum / d);
        }
        StepPredictor { thresholds, values }
    }
}

/// Piecewise-constant function: `values[i]` on `(thresholds[i-1], thresholds[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPredictor<T> {
    thresholds: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> StepPredictor<T> {
    #[inline]
    pub fn predict(&self, x: T) -> T {
        self.values[self.thresholds.partition_point(|&t| t < x)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    pub split_budget: usize,
}

/// Training data sorted by x, shared by every tree grown on it.
pub(crate) struct SortedSamples<T> {
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Scalar> SortedSamples<T> {
    pub(crate) fn new(xs: &[T], ys: &[T]) -> Self {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        Self {
            x: order.iter().map(|&i| xs[i]).collect(),
            y: order.iter().map(|&i| ys[i]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.x.len()
    }
}

struct Candidate<T> {
    gain: T,
    node: usize,
    cut: usize,
    threshold: T,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Candidate<T> {}
impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .partial_cmp(&other.gain)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Bootstrap-weighted distinct-x groups with prefix sums.
struct Groups<T> {
    x: Vec<T>,
    w: Vec<T>,
    sy: Vec<T>,
    syy: Vec<T>,
}

impl<T: Scalar> Groups<T> {
    fn bootstrap<R: Rng>(data: &SortedSamples<T>, rng: &mut R) -> Self {
        let n = data.len();
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let mut g = Groups {
            x: Vec::new(),
            w: vec![T::zero()],
            sy: vec![T::zero()],
            syy: vec![T::zero()],
        };
        let (mut w, mut sy, mut syy) = (T::zero(), T::zero(), T::zero());
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let c = T::lit(count as f64);
            let y = data.y[i];
            if g.x.last() != Some(&data.x[i]) {
                g.x.push(data.x[i]);
                g.w.push(w);
                g.sy.push(sy);
                g.syy.push(syy);
            }
            w = w + c;
            sy = sy + c * y;
            syy = syy + c * y * y;
            let last = g.w.len() - 1;
            g.w[last] = w;
            g.sy[last] = sy;
            g.syy[last] = syy;
        }
        g
    }

    #[inline]
    fn totals(&self, lo: usize, hi: usize) -> (T, T, T) {
        (
            self.w[hi] - self.w[lo],
            self.sy[hi] - self.sy[lo],
            self.syy[hi] - self.syy[lo],
        )
    }

    fn best_cut(&self, node: usize, lo: usize, hi: usize) -> Option<Candidate<T>> {
        if hi - lo < 2 {
            return None;
        }
        let (w, sy, syy) = self.totals(lo, hi);
        let parent = sy * sy / w;
        let mut best: Option<(T, usize)> = None;
        for cut in lo + 1..hi {
            let (wl, syl, _) = self.totals(lo, cut);
            let wr = w - wl;
            let syr = sy - syl;
            let gain = syl * syl / wl + syr * syr / wr - parent;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, cut));
            }
        }
        let (gain, cut) = best?;
        if !(gain > T::lit(1e-10) * syy) {
            return None;
        }
        let (a, b) = (self.x[cut - 1], self.x[cut]);
        let mid = (a + b) / T::lit(2.0);
        let threshold = if mid >= a && mid < b { mid } else { a };
        Some(Candidate {
            gain,
            node,
            cut,
            threshold,
        })
    }

    fn mean(&self, lo: usize, hi: usize) -> T {
        let (w, sy, _) = self.totals(lo, hi);
        sy / w
    }
}

pub(crate) fn grow_tree<T: Scalar, R: Rng>(
    data: &SortedSamples<T>,
    split_budget: usize,
    rng: &mut R,
) -> RegressionTree<T> {
    let groups = Groups::bootstrap(data, rng);
    let m = groups.x.len();
    let mut nodes = vec![Node::Leaf {
        value: groups.mean(0, m),
    }];
    let mut ranges = vec![(0usize, m)];
    let mut heap = BinaryHeap::new();
    if let Some(c) = groups.best_cut(0, 0, m) {
        heap.push(c);
    }
    let mut splits = 0;
    while splits < split_budget {
        let Some(c) = heap.pop() else { break };
        let (lo, hi) = ranges[c.node];
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf {
            value: groups.mean(lo, c.cut),
        });
        nodes.push(Node::Leaf {
            value: groups.mean(c.cut, hi),
        });
        ranges.push((lo, c.cut));
        ranges.push((c.cut, hi));
        nodes[c.node] = Node::Split {
            threshold: c.threshold,
            left: left as u32,
            right: right as u32,
        };
        splits += 1;
        if let Some(cl) = groups.best_cut(left, lo, c.cut) {
            heap.push(cl);
        }
        if let Some(cr) = groups.best_cut(right, c.cut, hi) {
            heap.push(cr);
        }
    }
    RegressionTree { nodes }
}

pub(crate) fn check_training_data<T: Scalar>(xs: &[T], ys: &[T]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("training data must be finite"));
    }
    Ok(())
}

/// Grows `trees` on `(xs, ys)`. Tree `t` draws its bootstrap from a stream
/// keyed by `(seed, t)`, so a forest of `d` trees is a prefix of one with more.
pub(crate) fn grow_forest_sorted<T: Scalar>(
    data: &SortedSamples<T>,
    params: ForestParams,
    seed: u64,
) -> RandomForest<T> {
    let trees = (0..params.trees)
        .map(|t| {
            let mut rng = seed::rng(seed, &[TREE_STREAM, t as u64]);
            grow_tree(data, params.split_budget, &mut rng)
        })
        .collect();
    RandomForest {
        split_budget: params.split_budget,
        trees,
    }
}

pub(crate) const TREE_STREAM: u64 = 0x7472_6565;

pub fn fit_forest<T: Scalar>(xs: &[T], ys: &[T], params: ForestParams, seed: u64) -> Result<RandomForest<T>> {
    check_training_data(xs, ys)?;
    if params.trees == 0 || params.split_budget == 0 {
        return Err(Error::param("tree count and split budget must be >= 1"));
    }
    Ok(grow_forest_sorted(&SortedSamples::new(xs, ys), params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_data(n: usize) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x < n as f64 / 2.0 { 1.0 } else { 3.0 }).collect();
        (xs, ys)
    }

    #[test]
    fn single_leaf_forest() {
        let forest = RandomForest::new(vec![RegressionTree::leaf(0.2)], 1).unwrap();
        for x in [1.0, 1e6, 7e6] {
            assert_eq!(forest.predict(x), 0.2);
        }
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let trees = [0.1f64, 0.2, 0.3]
            .iter()
            .map(|&v| {
                RegressionTree::from_nodes(vec![
                    Node::Split {
                        threshold: 5e5,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf { value: 9.0 },
                    Node::Leaf { value: v },
                ])
                .unwrap()
            })
            .collect();
        let forest = RandomForest::new(trees, 1).unwrap();
        assert!((forest.predict(1e6) - 0.2).abs() < 1e-15);
        assert_eq!(forest.predict(1.0), 9.0);
    }

    #[test]
    fn learns_a_step() {
        let (xs, ys) = step_data(200);
        let forest = fit_forest(
            &xs,
            &ys,
            ForestParams {
                trees: 20,
                split_budget: 5,
            },
            1,
        )
        .unwrap();
        assert!((forest.predict(10.0) - 1.0).abs() < 1e-9);
        assert!((forest.predict(190.0) - 3.0).abs() < 1e-9);
        assert!(forest.trees.iter().all(|t| t.split_count() <= 5));
    }

    #[test]
    fn constant_target_gives_constant_model() {
        let xs: Vec<f64> = (0..50).map(|i| (i * 1000) as f64).collect();
        let ys = vec![0.5; 50];
        let forest = fit_forest(
            &xs,
            &ys,
            ForestParams {
                trees: 5,
                split_budget: 10,
            },
            3,
        )
        .unwrap();
        assert!(forest.trees.iter().all(|t| t.split_count() == 0));
        assert_eq!(forest.predict(12345.0), 0.5);
    }

    #[test]
    fn split_budget_is_respected() {
        let xs: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 20.0).sin() + x / 100.0).collect();
        for budget in [1, 3, 17, 64] {
            let forest = fit_forest(
                &xs,
                &ys,
                ForestParams {
                    trees: 4,
                    split_budget: budget,
                },
                9,
            )
            .unwrap();
            for t in &forest.trees {
                assert!(t.split_count() <= budget);
                assert_eq!(t.split_count(), budget, "smooth target should use the budget");
            }
        }
    }

    #[test]
    fn fitting_is_reproducible() {
        let (xs, ys) = step_data(100);
        let p = ForestParams {
            trees: 7,
            split_budget: 4,
        };
        assert_eq!(fit_forest(&xs, &ys, p, 5).unwrap(), fit_forest(&xs, &ys, p, 5).unwrap());
        let small = fit_forest(&xs, &ys, ForestParams { trees: 3, ..p }, 5).unwrap();
        let big = fit_forest(&xs, &ys, p, 5).unwrap();
        assert_eq!(small.trees[..], big.trees[..3]);
    }

    #[test]
    fn serde_round_trip() {
        let (xs, ys) = step_data(60);
        let forest = fit_forest(
            &xs,
            &ys,
            ForestParams {
                trees: 3,
                split_budget: 3,
            },
            2,
        )
        .unwrap();
        let json = serde_json::to_string(&forest).unwrap();
        let back: RandomForest<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, forest);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        assert!(RegressionTree::<f64>::from_nodes(vec![]).is_err());
        assert!(RegressionTree::from_nodes(vec![Node::Split {
            threshold: 1.0,
            left: 1,
            right: 5
        }])
        .is_err());
        let over_budget = RegressionTree::from_nodes(vec![
            Node::Split {
                threshold: 1.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: 0.0 },
            Node::Leaf { value: 1.0 },
        ])
        .unwrap();
        assert!(RandomForest::new(vec![over_budget], 0).is_err());
    }

    proptest! {
        #[test]
        fn compiled_predictor_is_exact(
            pts in prop::collection::vec((0u32..10_000, 0.0f64..1.0), 2..120),
            trees in 1usize..6,
            budget in 1usize..20,
            seed in 0u64..1000,
            queries in prop::collection::vec(-10.0f64..11_000.0, 1..50),
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let forest = fit_forest(&xs, &ys, ForestParams { trees, split_budget: budget }, seed).unwrap();
            let compiled = forest.compile();
            for q in queries.iter().chain(&xs) {
                prop_assert_eq!(compiled.predict(*q).to_bits(), forest.predict(*q).to_bits());
            }
        }

        #[test]
        fn prediction_bounded_by_leaves_and_order_free(
            pts in prop::collection::vec((0u32..1000, 0.0f64..5.0), 2..80),
            seed in 0u64..1000,
            q in 0.0f64..1000.0,
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let forest = fit_forest(&xs, &ys, ForestParams { trees: 5, split_budget: 6 }, seed).unwrap();
            let leaves: Vec<f64> = forest.trees.iter().flat_map(|t| t.leaf_values()).collect();
            let lo = leaves.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = leaves.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = forest.predict(q);
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);

            let mut reversed = forest.clone();
            reversed.trees.reverse();
            prop_assert!((reversed.predict(q) - p).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }
}
