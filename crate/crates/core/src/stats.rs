//! Correlation, regression-quality and distribution-distance measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_pair<T>(xs: &[T], ys: &[T], min_len: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < min_len {
        return Err(Error::InsufficientSamples {
            needed: min_len,
            got: xs.len(),
        });
    }
    Ok(())
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// Pearson product-moment correlation.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_pair(xs, ys, 2)?;
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::ConstantInput("correlation"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = T::lit((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T> {
    check_pair(xs, ys, 2)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics<T> {
    pub mae: T,
    pub rmse: T,
    pub r2: T,
}

/// MAE, RMSE and R². R² of a constant target is reported as 0.
pub fn regression_metrics<T: Scalar>(y_true: &[T], y_pred: &[T]) -> Result<RegressionMetrics<T>> {
    check_pair(y_true, y_pred, 2)?;
    Ok(regression_metrics_unchecked(y_true, y_pred))
}

/// Same as [`regression_metrics`] but accepts a single sample (used for tiny CV folds).
pub(crate) fn regression_metrics_unchecked<T: Scalar>(y_true: &[T], y_pred: &[T]) -> RegressionMetrics<T> {
    let n = T::from_count(y_true.len());
    let mu = mean(y_true);
    let (mut abs, mut sq, mut tot) = (T::zero(), T::zero(), T::zero());
    for (&y, &p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        abs = abs + e.abs();
        sq = sq + e * e;
        tot = tot + (y - mu) * (y - mu);
    }
    let r2 = if tot > T::zero() {
        T::one() - sq / tot
    } else {
        T::zero()
    };
    RegressionMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionDistance<T> {
    pub ks_stat: T,
}

/// Two-sample Kolmogorov–Smirnov statistic: sup |F_a(x) - F_b(x)|.
pub fn ks_statistic<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let cmp = |x: &T, y: &T| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal);
    a.sort_by(cmp);
    b.sort_by(cmp);
    let (na, nb) = (T::from_count(a.len()), T::from_count(b.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let gap = (T::from_count(i) / na - T::from_count(j) / nb).abs();
        d = d.max(gap);
    }
    Ok(d)
}

pub fn distribution_distance<T: Scalar>(original: &[T], sampled: &[T]) -> Result<DistributionDistance<T>> {
    Ok(DistributionDistance {
        ks_stat: ks_statistic(original, sampled)?,
    })
}

/// Count, mean, sample standard deviation, extremes and median.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Summary {
            count: n,
            mean,
            sd,
            min: sorted[0],
            max: sorted[n - 1],
            median,
        }
    }
}
