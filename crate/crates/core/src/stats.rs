//! Tail fits, exponential moments and resampling utilities.

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{convolve, potential_grid, GridField, GridShape, MollifierKernel, RadiusEnvelope};
use crate::gef::GefSample;
use crate::rng::{derive_seed, rng_for};
use rand::Rng;

/// Number of bootstrap resamples used throughout.
pub const RESAMPLES: usize = 1000;
/// Tail points need at least this many exceedances to enter the fit.
pub const MIN_EXCEEDANCES: usize = 20;
/// Fit quality needed for a tail to count as Gaussian.
pub const GAUSSIAN_FIT_QUALITY: f64 = 0.9;

const BOOTSTRAP_TAG: u64 = 0xb007;

/// Statistic values over `resamples` bootstrap resamples, sorted ascending.
pub fn bootstrap<F>(samples: &[f64], resamples: usize, seed: u64, statistic: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut out = bootstrap_in_order(samples, resamples, seed, statistic);
    out.sort_by(f64::total_cmp);
    out
}

/// Like [`bootstrap`] but in resample order, so resample `r` of two
/// independent calls can be combined.
pub fn bootstrap_in_order<F>(samples: &[f64], resamples: usize, seed: u64, statistic: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = samples.len();
    (0..resamples as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                let mut rng = rng_for(derive_seed(seed, &[BOOTSTRAP_TAG, r]));
                for slot in buf.iter_mut() {
                    *slot = samples[rng.gen_range(0..n)];
                }
                statistic(buf)
            },
        )
        .collect()
}

/// Empirical quantile of sorted data by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Central percentile interval at the given level, e.g. 0.95.
pub fn percentile_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let a = (1.0 - level) / 2.0;
    (quantile_sorted(sorted, a), quantile_sorted(sorted, 1.0 - a))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Weighted least-squares line `y = a + b x` and its weighted R^2.
#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let sw: f64 = w.iter().sum();
    if x.len() < 2 || !(sw > 0.0) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - mx) * (xi - mx);
        sxy += wi * (xi - mx) * (yi - my);
        syy += wi * (yi - my) * (yi - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(LineFit {
        intercept: my - slope * mx,
        slope,
        r2,
    })
}

/// Empirical survival function and a Gaussian-tail fit
/// `Pr{X > lambda} ~ big_c1 exp(-c1 lambda^2)`.
#[derive(Clone, Debug)]
pub struct TailReport {
    pub lambdas: Vec<f64>,
    pub survival: Vec<f64>,
    pub exceedances: Vec<usize>,
    pub c1: f64,
    pub big_c1: f64,
    /// Weighted coefficient of determination of the fit.
    pub fit_quality: f64,
    pub n_samples: usize,
}

impl TailReport {
    pub fn is_gaussian(&self) -> bool {
        self.fit_quality >= GAUSSIAN_FIT_QUALITY && self.c1 > 0.0
    }
}

const TAIL_LEVELS: usize = 40;

/// Fits `log S(lambda)` against `lambda^2` over thresholds between the
/// median and the level where only `MIN_EXCEEDANCES` samples remain. The
/// thresholds are sample quantiles at geometrically spaced survival levels,
/// and each point is weighted by its exceedance count, the inverse of the
/// approximate variance of `log S`.
pub fn fit_gaussian_tail(samples: &[f64]) -> Result<TailReport> {
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument("tail samples must be finite and nonnegative".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    fit_sorted(&sorted)
}

fn fit_sorted(sorted: &[f64]) -> Result<TailReport> {
    let n = sorted.len();
    if n < 2 * MIN_EXCEEDANCES || sorted[0] == sorted[n - 1] {
        return Err(Error::Degenerate(format!("{n} samples without spread")));
    }
    let top = MIN_EXCEEDANCES as f64 / n as f64;
    let ratio = (top / 0.5).powf(1.0 / (TAIL_LEVELS - 1) as f64);
    let median = quantile_sorted(sorted, 0.5);
    let mut lambdas = Vec::with_capacity(TAIL_LEVELS);
    let mut survival = Vec::with_capacity(TAIL_LEVELS);
    let mut exceedances = Vec::with_capacity(TAIL_LEVELS);
    let mut level = 0.5;
    for _ in 0..TAIL_LEVELS {
        let lambda = quantile_sorted(sorted, 1.0 - level).max(median);
        level *= ratio;
        if lambdas.last().is_some_and(|&l| lambda <= l) {
            continue;
        }
        // number of samples strictly above lambda
        let count = n - sorted.partition_point(|&x| x <= lambda);
        if count < MIN_EXCEEDANCES {
            break;
        }
        lambdas.push(lambda);
        survival.push(count as f64 / n as f64);
        exceedances.push(count);
    }
    let x: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    let y: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let w: Vec<f64> = exceedances.iter().map(|&c| c as f64).collect();
    let fit = weighted_line_fit(&x, &y, &w)
        .ok_or_else(|| Error::Degenerate("fewer than two distinct tail thresholds".into()))?;
    Ok(TailReport {
        lambdas,
        survival,
        exceedances,
        c1: -fit.slope,
        big_c1: fit.intercept.exp(),
        fit_quality: fit.r2,
        n_samples: n,
    })
}

/// Bootstrap percentile interval for the fitted `c1`.
pub fn tail_c1_interval(samples: &[f64], resamples: usize, seed: u64, level: f64) -> (f64, f64) {
    let stats = bootstrap(samples, resamples, seed, |s| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        fit_sorted(&v).map(|r| r.c1).unwrap_or(f64::NAN)
    });
    let finite: Vec<f64> = stats.into_iter().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    percentile_interval(&finite, level)
}

/// Estimate of `E exp(eps X^2)`.
#[derive(Clone, Copy, Debug)]
pub struct ExpMoment {
    pub eps: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Share of the sum contributed by the largest 1% of terms.
    pub top_share: f64,
    /// Raised when `top_share > 0.5`: the estimate is dominated by a handful
    /// of samples and `eps` is too large for this sample size.
    pub unstable: bool,
}

pub fn exp_moment(samples: &[f64], eps: f64, resamples: usize, seed: u64) -> Result<ExpMoment> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("exp_moment needs samples".into()));
    }
    let mut terms: Vec<f64> = samples.iter().map(|x| (eps * x * x).exp()).collect();
    let m = mean(&terms);
    let boot = bootstrap(&terms, resamples, seed, mean);
    let (ci_lo, ci_hi) = percentile_interval(&boot, 0.95);
    terms.sort_by(|a, b| b.total_cmp(a));
    let k = samples.len().div_ceil(100);
    let total: f64 = terms.iter().sum();
    let top_share = terms[..k].iter().sum::<f64>() / total;
    Ok(ExpMoment {
        eps,
        mean: m,
        ci_lo,
        ci_hi,
        top_share,
        unstable: !(top_share <= 0.5) || !m.is_finite(),
    })
}

/// The largest `eps` on the grid whose moment estimate is finite and stable,
/// scanning upward and stopping at the first unstable value.
pub fn largest_stable_eps(samples: &[f64], grid: &[f64], resamples: usize, seed: u64) -> Result<Option<ExpMoment>> {
    let mut best = None;
    for &eps in grid {
        let est = exp_moment(samples, eps, resamples, seed)?;
        if est.unstable {
            break;
        }
        best = Some(est);
    }
    Ok(best)
}

/// Two-sample Kolmogorov-Smirnov test: statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// `Pr{K > lambda}` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Source of nonnegative random fields for the tail-transfer experiment.
pub trait EtaSampler: Sync {
    fn sample(&self, trial: u64, shape: &GridShape) -> Result<GridField>;
}

/// `eta = |phi|` for independent GEF samples.
pub struct GefAbsPotential {
    pub seed: u64,
    pub truncation_tol: f64,
}

const TRANSFER_TAG: u64 = 0x7472_616e;

impl EtaSampler for GefAbsPotential {
    fn sample(&self, trial: u64, shape: &GridShape) -> Result<GridField> {
        let corner = shape.point(shape.nx - 1, shape.ny - 1).norm().max(shape.origin.norm());
        let gef = GefSample::new(derive_seed(self.seed, &[TRANSFER_TAG, trial]), corner + 3.0, self.truncation_tol)?;
        let mut phi = potential_grid(&gef, shape);
        phi.patch_singular();
        Ok(phi.map(f64::abs))
    }
}

/// `eta = 0`.
pub struct ZeroEta;

impl EtaSampler for ZeroEta {
    fn sample(&self, _trial: u64, shape: &GridShape) -> Result<GridField> {
        Ok(GridField::filled(*shape, 0.0))
    }
}

/// Outcome of the tail-transfer experiment at one constant.
#[derive(Clone, Debug)]
pub struct TransferReport {
    pub const_c: f64,
    pub r_at_origin: Vec<f64>,
    /// Present when the `R(0)` samples have spread.
    pub tail: Option<TailReport>,
    /// Present when every trial gave the same `R(0)`.
    pub constant: Option<f64>,
    pub c1_interval: Option<(f64, f64)>,
}

impl TransferReport {
    pub fn passes(&self) -> bool {
        match (&self.tail, self.constant) {
            (Some(t), _) => t.is_gaussian(),
            (None, Some(v)) => (v - self.const_c.sqrt()).abs() <= 1e-12 * v.max(1.0),
            (None, None) => false,
        }
    }
}

/// Local grid for the transfer experiment.
#[derive(Clone, Copy, Debug)]
pub struct TransferGrid {
    pub half_width: f64,
    pub spacing: f64,
    pub kernel_radius: f64,
}

impl Default for TransferGrid {
    fn default() -> Self {
        Self {
            half_width: 6.0,
            spacing: 0.2,
            kernel_radius: 1.0,
        }
    }
}

/// Builds `R` from sampled `eta` fields, collects `R(0)` per trial for each
/// constant and fits its tail. The smoothed field of a trial is shared by
/// all constants.
pub fn envelope_tail_transfer(
    sampler: &dyn EtaSampler,
    const_cs: &[f64],
    trials: u64,
    grid: TransferGrid,
    seed: u64,
) -> Result<Vec<TransferReport>> {
    let shape = GridShape::centered(grid.half_width, grid.spacing);
    let kernel = MollifierKernel::new(grid.kernel_radius, grid.spacing)?;
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let eta = sampler.sample(t, &shape)?;
            let smoothed = convolve(&eta, &kernel)?;
            const_cs
                .iter()
                .map(|&c| Ok(RadiusEnvelope::new(&smoothed, c)?.value_at(Complex::new(0.0, 0.0))))
                .collect()
        })
        .collect::<Result<_>>()?;
    const_cs
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let r: Vec<f64> = per_trial.iter().map(|row| row[ci]).collect();
            let (tail, constant, c1_interval) = match fit_gaussian_tail(&r) {
                Ok(t) => {
                    let interval = tail_c1_interval(&r, RESAMPLES, derive_seed(seed, &[ci as u64]), 0.95);
                    (Some(t), None, Some(interval))
                }
                Err(Error::Degenerate(_)) if r.iter().all(|v| *v == r[0]) => (None, Some(r[0]), None),
                Err(e) => return Err(e),
            };
            Ok(TransferReport {
                const_c: c,
                r_at_origin: r,
                tail,
                constant,
                c1_interval,
            })
        })
        .collect()
}
