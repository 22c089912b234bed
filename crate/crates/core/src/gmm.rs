//! One-dimensional Gaussian mixtures fitted to the natural log of positive data.
//!
//! Each candidate component count is fitted by EM from several k-means++
//! seedings; the count minimising AIC or BIC is kept. Sampling draws in log
//! space and exponentiates, so samples are always positive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    #[default]
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::param(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    /// Successful initialisations per component count; the best likelihood wins.
    pub restarts: usize,
    /// Upper bound on initialisations, counting collapsed ones.
    pub max_attempts: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain drops below this.
    pub tolerance: f64,
    /// A component whose variance falls to this value has collapsed.
    pub variance_floor: f64,
    pub kmeans_iters: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_attempts: 20,
            max_iter: 200,
            tolerance: 1e-6,
            variance_floor: 1e-8,
            kmeans_iters: 10,
        }
    }
}

/// Mixture over log-space values. `means` and `variances` describe `ln(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture<T> {
    pub k: usize,
    pub weights: Vec<T>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
    pub log_likelihood: T,
    pub aic: T,
    pub bic: T,
    pub sample_count: usize,
}

/// Free parameters of a `k`-component 1-D mixture.
pub fn parameter_count(k: usize) -> usize {
    3 * k - 1
}

fn criteria<T: Scalar>(k: usize, n: usize, ll: T) -> (T, T) {
    let p = T::from_count(parameter_count(k));
    let two = T::lit(2.0);
    let aic = two * p - two * ll;
    let bic = p * T::from_count(n.max(1)).ln() - two * ll;
    (aic, bic)
}

impl<T: Scalar> GaussianMixture<T> {
    /// Builds an unfitted mixture from its components.
    pub fn from_components(weights: Vec<T>, means: Vec<T>, variances: Vec<T>) -> Result<Self> {
        let k = weights.len();
        let (aic, bic) = criteria(k.max(1), 0, T::zero());
        let model = Self {
            k,
            weights,
            means,
            variances,
            log_likelihood: T::zero(),
            aic,
            bic,
            sample_count: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 || self.weights.len() != k || self.means.len() != k || self.variances.len() != k {
            return Err(Error::param(format!(
                "mixture component arrays must all have length K = {k} >= 1"
            )));
        }
        let total: T = self.weights.iter().copied().sum();
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_count(8 * k));
        if (total - T::one()).abs() > tol {
            return Err(Error::param(format!("mixture weights sum to {total}")));
        }
        if self.weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::param("mixture weights must be non-negative"));
        }
        if self.variances.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::param("mixture variances must be positive"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("mixture means must be finite"));
        }
        Ok(())
    }

    /// Weighted mean of the component means (mean of `ln x`).
    pub fn mean_log(&self) -> T {
        self.weights.iter().zip(&self.means).map(|(&w, &m)| w * m).sum()
    }

    /// Log density of the mixture at log-space point `z`.
    pub fn log_density(&self, z: T) -> T {
        let mut terms = vec![T::zero(); self.k];
        component_log_densities(z, &self.weights, &self.means, &self.variances, &mut terms);
        log_sum_exp(&terms)
    }

    /// One log-space draw.
    pub fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u = T::unit(rng);
        let mut acc = T::zero();
        let mut component = self.k - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc = acc + w;
            if u < acc {
                component = i;
                break;
            }
        }
        self.means[component] + self.variances[component].sqrt() * T::standard_normal(rng)
    }

    /// One draw on the original (positive) scale.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.sample_log(rng).exp()
    }

    /// `n` independent positive draws, reproducible from `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<T>> {
        if n == 0 {
            return Err(Error::param("sample size must be >= 1"));
        }
        self.validate()?;
        let mut rng = seed::rng(seed, &[]);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }

    pub fn criterion_value(&self, criterion: Criterion) -> T {
        match criterion {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
        }
    }
}

fn log_sum_exp<T: Scalar>(terms: &[T]) -> T {
    let max = terms.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<T>().ln()
}

#[inline]
fn component_log_densities<T: Scalar>(z: T, w: &[T], mu: &[T], var: &[T], out: &mut [T]) {
    let half_ln_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = T::lit(0.5);
    for j in 0..w.len() {
        let d = z - mu[j];
        out[j] = w[j].ln() - half_ln_2pi - half * var[j].ln() - half * d * d / var[j];
    }
}

/// Outcome of EM for a fixed component count.
#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub model: GaussianMixture<T>,
    /// Log-likelihood before every M-step, and of the final parameters.
    pub trace: Vec<T>,
    pub converged: bool,
}

struct Params<T> {
    w: Vec<T>,
    mu: Vec<T>,
    var: Vec<T>,
}

fn kmeans_seed<T: Scalar, R: Rng>(data: &[T], k: usize, settings: &EmSettings, rng: &mut R) -> Params<T> {
    let n = data.len();
    let global_mean = data.iter().copied().sum::<T>() / T::from_count(n);
    let global_var = data.iter().map(|&x| (x - global_mean) * (x - global_mean)).sum::<T>() / T::from_count(n);

    // k-means++ seeding
    let mut centers = vec![data[rng.random_range(0..n)]];
    let mut d2: Vec<T> = data.iter().map(|&x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let target = T::unit(rng) * total;
            let mut acc = T::zero();
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc = acc + d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            data[pick]
        } else {
            data[rng.random_range(0..n)]
        };
        centers.push(next);
        for (d, &x) in d2.iter_mut().zip(data) {
            *d = d.min((x - next).powi(2));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..settings.kmeans_iters.max(1) {
        for (a, &x) in assign.iter_mut().zip(data) {
            let mut best = 0;
            for j in 1..k {
                if (x - centers[j]).abs() < (x - centers[best]).abs() {
                    best = j;
                }
            }
            *a = best;
        }
        let mut sum = vec![T::zero(); k];
        let mut count = vec![0usize; k];
        for (&a, &x) in assign.iter().zip(data) {
            sum[a] = sum[a] + x;
            count[a] += 1;
        }
        for j in 0..k {
            if count[j] > 0 {
                centers[j] = sum[j] / T::from_count(count[j]);
            }
        }
    }

    let min_var = (global_var * T::lit(1e-3)).max(T::lit(settings.variance_floor * 10.0));
    let mut count = vec![0usize; k];
    let mut ss = vec![T::zero(); k];
    for (&a, &x) in assign.iter().zip(data) {
        count[a] += 1;
        ss[a] = ss[a] + (x - centers[a]).powi(2);
    }
    let mut w = Vec::with_capacity(k);
    let mut var = Vec::with_capacity(k);
    for j in 0..k {
        let c = count[j].max(1);
        w.push(T::from_count(c));
        let v = if count[j] > 1 {
            ss[j] / T::from_count(count[j])
        } else {
            global_var
        };
        var.push(v.max(min_var));
    }
    let total: T = w.iter().copied().sum();
    for x in &mut w {
        *x = *x / total;
    }
    Params { w, mu: centers, var }
}

/// Runs EM from `init`. `Err` means a component collapsed.
fn run_em<T: Scalar>(data: &[T], init: Params<T>, settings: &EmSettings) -> Result<EmFit<T>, ()> {
    let n = data.len();
    let k = init.w.len();
    let Params { mut w, mut mu, mut var } = init;
    let mut resp = vec![T::zero(); n * k];
    let mut logp = vec![T::zero(); k];
    let mut trace: Vec<T> = Vec::new();
    let floor = T::lit(settings.variance_floor);
    let tol = T::lit(settings.tolerance);
    let mut converged = false;

    let e_step = |w: &[T], mu: &[T], var: &[T], resp: &mut [T], logp: &mut [T]| -> T {
        let mut ll = T::zero();
        for (i, &x) in data.iter().enumerate() {
            component_log_densities(x, w, mu, var, logp);
            let lse = log_sum_exp(logp);
            ll = ll + lse;
            for j in 0..k {
                resp[i * k + j] = (logp[j] - lse).exp();
            }
        }
        ll
    };

    let mut iter = 0;
    loop {
        let ll = e_step(&w, &mu, &var, &mut resp, &mut logp);
        if !ll.is_finite() {
            return Err(());
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - T::lit(1e-9) * prev.abs().max(T::one()),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if ll - prev <= tol * prev.abs().max(T::one()) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iter == settings.max_iter {
            break;
        }
        iter += 1;

        // M-step
        let mut nk = vec![T::zero(); k];
        let mut sx = vec![T::zero(); k];
        for (i, &x) in data.iter().enumerate() {
            for j in 0..k {
                let r = resp[i * k + j];
                nk[j] = nk[j] + r;
                sx[j] = sx[j] + r * x;
            }
        }
        let tiny = T::lit(1e-10) * T::from_count(n);
        if nk.iter().any(|&c| !(c > tiny)) {
            return Err(());
        }
        for j in 0..k {
            mu[j] = sx[j] / nk[j];
        }
        let mut sxx = vec![T::zero(); k];
        for (i, &x) in data.iter().enumerate() {
            for j in 0..k {
                let d = x - mu[j];
                sxx[j] = sxx[j] + resp[i * k + j] * d * d;
            }
        }
        let total: T = nk.iter().copied().sum();
        for j in 0..k {
            var[j] = sxx[j] / nk[j];
            if !(var[j] > floor) {
                return Err(());
            }
            w[j] = nk[j] / total;
        }
    }

    let ll = *trace.last().expect("at least one E-step");
    let (aic, bic) = criteria(k, n, ll);
    Ok(EmFit {
        model: GaussianMixture {
            k,
            weights: w,
            means: mu,
            variances: var,
            log_likelihood: ll,
            aic,
            bic,
            sample_count: n,
        },
        trace,
        converged,
    })
}

/// Fits a `k`-component mixture to log-space data, keeping the best of
/// `settings.restarts` non-degenerate initialisations.
pub fn fit_log_space<T: Scalar>(log_data: &[T], k: usize, seed: u64, settings: &EmSettings) -> Result<EmFit<T>> {
    if log_data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 || k > log_data.len() {
        return Err(Error::param(format!(
            "component count {k} must lie in [1, {}]",
            log_data.len()
        )));
    }
    let mut best: Option<EmFit<T>> = None;
    let mut successes = 0;
    let mut attempts = 0;
    while successes < settings.restarts.max(1) && attempts < settings.max_attempts.max(1) {
        let mut rng = seed::rng(seed, &[k as u64, attempts as u64]);
        attempts += 1;
        let init = kmeans_seed(log_data, k, settings, &mut rng);
        if let Ok(fit) = run_em(log_data, init, settings) {
            successes += 1;
            let better = best
                .as_ref()
                .is_none_or(|b| fit.model.log_likelihood > b.model.log_likelihood);
            if better {
                best = Some(fit);
            }
        }
    }
    best.ok_or(Error::DegenerateMixture { k, attempts })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmFitOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub criterion: Criterion,
    pub seed: u64,
    pub em: EmSettings,
}

impl Default for GmmFitOptions {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 10,
            criterion: Criterion::Bic,
            seed: 0,
            em: EmSettings::default(),
        }
    }
}

/// Fits `ln(values)` for every K in `[k_min, k_max]` and returns the model
/// minimising `criterion` (smallest K on ties).
pub fn fit_gmm<T: Scalar>(
    values: &[T],
    k_min: usize,
    k_max: usize,
    criterion: Criterion,
    seed: u64,
) -> Result<GaussianMixture<T>> {
    fit_gmm_with(
        values,
        &GmmFitOptions {
            k_min,
            k_max,
            criterion,
            seed,
            em: EmSettings::default(),
        },
    )
}

pub fn fit_gmm_with<T: Scalar>(values: &[T], opts: &GmmFitOptions) -> Result<GaussianMixture<T>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((index, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > T::zero() && v.is_finite()))
    {
        return Err(Error::NonPositive {
            index,
            value: v.as_f64(),
        });
    }
    if opts.k_min == 0 || opts.k_min > opts.k_max || opts.k_max > values.len() {
        return Err(Error::param(format!(
            "need 1 <= k_min <= k_max <= {} (got {}..={})",
            values.len(),
            opts.k_min,
            opts.k_max
        )));
    }
    let logs: Vec<T> = values.iter().map(|v| v.ln()).collect();

    let mut best: Option<GaussianMixture<T>> = None;
    let mut last_err = None;
    for k in opts.k_min..=opts.k_max {
        match fit_log_space(&logs, k, opts.seed, &opts.em) {
            Ok(fit) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| fit.model.criterion_value(opts.criterion) < b.criterion_value(opts.criterion));
                if better {
                    best = Some(fit.model);
                }
            }
            Err(e @ Error::DegenerateMixture { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(model) => Ok(model),
        None => Err(last_err.unwrap_or(Error::EmptyInput)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_lognormals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed, &[99]);
        let a = Normal::new(2.0f64, 0.5).unwrap();
        let b = Normal::new(6.0f64, 0.5).unwrap();
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.5 {
                    a.sample(&mut rng).exp()
                } else {
                    b.sample(&mut rng).exp()
                }
            })
            .collect()
    }

    fn sorted_means(m: &GaussianMixture<f64>) -> Vec<f64> {
        let mut v = m.means.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn recovers_two_component_mixture() {
        let data = two_lognormals(5000, 1);
        let model = fit_gmm(&data, 1, 10, Criterion::Bic, 7).unwrap();
        assert_eq!(model.k, 2);
        let means = sorted_means(&model);
        assert!((means[0] - 2.0).abs() < 0.1, "{means:?}");
        assert!((means[1] - 6.0).abs() < 0.1, "{means:?}");
        let total: f64 = model.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_lognormal_selects_one_component() {
        let mut rng = seed::rng(3, &[]);
        let d = Normal::new(1.0f64, 0.8).unwrap();
        let data: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng).exp()).collect();
        let model = fit_gmm(&data, 1, 6, Criterion::Bic, 11).unwrap();
        assert_eq!(model.k, 1);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let e = std::f64::consts::E;
        let err = fit_gmm(&[e, e, e, e], 1, 2, Criterion::Bic, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateMixture { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_gmm::<f64>(&[], 1, 1, Criterion::Bic, 0),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            fit_gmm(&[1.0, 0.0, 2.0], 1, 1, Criterion::Bic, 0),
            Err(Error::NonPositive { index: 1, .. })
        ));
        assert!(fit_gmm(&[1.0, 2.0], 1, 3, Criterion::Bic, 0).is_err());
        assert!(fit_gmm(&[1.0, 2.0], 2, 1, Criterion::Bic, 0).is_err());
    }

    #[test]
    fn em_likelihood_never_decreases() {
        let data: Vec<f64> = two_lognormals(2000, 5).iter().map(|x| x.ln()).collect();
        for k in 1..=4 {
            let fit = fit_log_space(&data, k, 3, &EmSettings::default()).unwrap();
            for pair in fit.trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9 * pair[0].abs(), "k={k}: {pair:?}");
            }
            assert_eq!(*fit.trace.last().unwrap(), fit.model.log_likelihood);
        }
    }

    #[test]
    fn information_criteria_match_definitions() {
        let data = two_lognormals(800, 2);
        for k in 1..=3 {
            let m = fit_gmm(&data, k, k, Criterion::Aic, 1).unwrap();
            let p = (3 * k - 1) as f64;
            assert_eq!(m.aic, 2.0 * p - 2.0 * m.log_likelihood);
            assert_eq!(m.bic, p * (800f64).ln() - 2.0 * m.log_likelihood);
        }
    }

    #[test]
    fn fitting_is_reproducible() {
        let data = two_lognormals(1500, 4);
        let a = fit_gmm(&data, 1, 4, Criterion::Aic, 21).unwrap();
        let b = fit_gmm(&data, 1, 4, Criterion::Aic, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_examples() {
        let narrow = GaussianMixture::<f64>::from_components(vec![1.0], vec![0.0], vec![1e-12]).unwrap();
        let xs = narrow.sample(3, 0).unwrap();
        assert!(xs.iter().all(|x| (x - 1.0).abs() < 1e-4));

        let model = GaussianMixture::<f64>::from_components(vec![0.5, 0.5], vec![2.0, 6.0], vec![0.25, 0.25]).unwrap();
        let xs = model.sample(100_000, 9).unwrap();
        let log_mean = xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64;
        assert!((log_mean - model.mean_log()).abs() < 0.05);

        assert_eq!(model.sample(1, 42).unwrap(), model.sample(1, 42).unwrap());
        assert!(model.sample(0, 1).is_err());
    }

    #[test]
    fn log_density_integrates_to_one() {
        let model = GaussianMixture::from_components(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.5, 1.5]).unwrap();
        let h = 1e-3;
        let total: f64 = (-10_000..15_000)
            .map(|i| model.log_density(i as f64 * h).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn invalid_components_are_rejected() {
        assert!(GaussianMixture::from_components(vec![0.6, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixture::from_components(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GaussianMixture::<f64>::from_components(vec![], vec![], vec![]).is_err());
    }
}
