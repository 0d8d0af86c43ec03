//! Comparison point processes and their linear statistics.
//!
//! Three processes of intensity `1/pi` are compared: GEF zeros, a lattice
//! with independent deletions, and a lattice with independent Gaussian
//! displacements. Their linear statistics have variances that grow, stay
//! bounded and decay in the dilation `L`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gef::GefSample;
use crate::pipeline::zeros_in_disk;
use crate::rng::{complex_gaussian, derive_seed, rng_for};
use crate::stats::{bootstrap_in_order, percentile_interval, variance, weighted_line_fit, RESAMPLES};

/// Distance the displaced lattice extends beyond the window.
pub const DISPLACED_LATTICE_EXTENSION: f64 = 6.0;
/// Margin kept between the test function's support and the window edge.
pub const WINDOW_MARGIN: f64 = 0.5;
/// Largest acceptable half-width of the slope interval.
pub const MAX_SLOPE_HALF_WIDTH: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcessModel {
    Gef,
    BernoulliLattice,
    GaussianLattice,
}

impl ProcessModel {
    pub const ALL: [ProcessModel; 3] = [Self::Gef, Self::BernoulliLattice, Self::GaussianLattice];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gef => "GEF",
            Self::BernoulliLattice => "S1_BERNOULLI",
            Self::GaussianLattice => "S2_GAUSSIAN_LATTICE",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::Gef => 1,
            Self::BernoulliLattice => 2,
            Self::GaussianLattice => 3,
        }
    }

    /// The exponent of `L` in the variance of linear statistics.
    pub fn expected_slope(self) -> f64 {
        match self {
            Self::Gef => -1.0,
            Self::BernoulliLattice => 1.0,
            Self::GaussianLattice => 0.0,
        }
    }
}

/// Axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub min: Complex<f64>,
    pub max: Complex<f64>,
}

impl Window {
    pub fn new(min: Complex<f64>, max: Complex<f64>) -> Result<Self> {
        if !(min.re < max.re && min.im < max.im) || !(min.norm().is_finite() && max.norm().is_finite()) {
            return Err(Error::InvalidArgument("window corners must be finite and ordered".into()));
        }
        Ok(Self { min, max })
    }

    pub fn centered_square(half_width: f64) -> Result<Self> {
        Self::new(Complex::new(-half_width, -half_width), Complex::new(half_width, half_width))
    }

    pub fn contains(&self, z: Complex<f64>) -> bool {
        (self.min.re..=self.max.re).contains(&z.re) && (self.min.im..=self.max.im).contains(&z.im)
    }

    pub fn area(&self) -> f64 {
        (self.max.re - self.min.re) * (self.max.im - self.min.im)
    }

    /// Radius of the largest disk about `center` inside the window.
    pub fn inradius_at(&self, center: Complex<f64>) -> f64 {
        (center.re - self.min.re)
            .min(self.max.re - center.re)
            .min(center.im - self.min.im)
            .min(self.max.im - center.im)
    }

    fn corner_radius(&self) -> f64 {
        [self.min, self.max, Complex::new(self.min.re, self.max.im), Complex::new(self.max.re, self.min.im)]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    fn expand(&self, by: f64) -> Self {
        let d = Complex::new(by, by);
        Self {
            min: self.min - d,
            max: self.max + d,
        }
    }
}

/// Knobs that pin the randomness of the lattice models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessOptions {
    pub deletion_probability: f64,
    /// Multiplies every Gaussian displacement.
    pub displacement_scale: f64,
    pub truncation_tol: f64,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            deletion_probability: 0.5,
            displacement_scale: 1.0,
            truncation_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointProcessSample {
    pub model: ProcessModel,
    pub points: Vec<Complex<f64>>,
    pub window: Window,
    pub seed: u64,
}

pub fn sample_process(model: ProcessModel, window: Window, seed: u64) -> Result<PointProcessSample> {
    sample_process_with(model, window, seed, &ProcessOptions::default())
}

pub fn sample_process_with(model: ProcessModel, window: Window, seed: u64, options: &ProcessOptions) -> Result<PointProcessSample> {
    let points = match model {
        ProcessModel::Gef => {
            let radius = window.corner_radius();
            let gef = GefSample::new(seed, radius + 3.0, options.truncation_tol)?;
            zeros_in_disk(&gef, radius)?.points
        }
        ProcessModel::BernoulliLattice => {
            let p = options.deletion_probability;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("deletion probability {p} outside [0, 1]")));
            }
            let mut rng = rng_for(seed);
            lattice_in(&window, FRAC_PI_2.sqrt())
                .filter(|_| rng.gen::<f64>() >= p)
                .collect()
        }
        ProcessModel::GaussianLattice => {
            let mut rng = rng_for(seed);
            let scale = options.displacement_scale;
            lattice_in(&window.expand(DISPLACED_LATTICE_EXTENSION), PI.sqrt())
                .map(|p| p + complex_gaussian(&mut rng) * scale)
                .collect()
        }
    };
    Ok(PointProcessSample {
        model,
        points: points.into_iter().filter(|z| window.contains(*z)).collect(),
        window,
        seed,
    })
}

/// Homogeneous Poisson process of the given intensity in the window; the
/// uncorrelated control for displacement statistics.
pub fn poisson_points(window: &Window, intensity: f64, seed: u64) -> Result<Vec<Complex<f64>>> {
    let mean = intensity * window.area();
    let law = Poisson::new(mean).map_err(|e| Error::InvalidArgument(format!("Poisson mean {mean}: {e}")))?;
    let mut rng = rng_for(seed);
    let n = law.sample(&mut rng) as usize;
    Ok((0..n)
        .map(|_| {
            Complex::new(
                rng.gen_range(window.min.re..window.max.re),
                rng.gen_range(window.min.im..window.max.im),
            )
        })
        .collect())
}

/// Points of `spacing * Z^2` inside the window, row by row.
fn lattice_in(window: &Window, spacing: f64) -> impl Iterator<Item = Complex<f64>> {
    let k0 = (window.min.re / spacing).ceil() as i64;
    let k1 = (window.max.re / spacing).floor() as i64;
    let l0 = (window.min.im / spacing).ceil() as i64;
    let l1 = (window.max.im / spacing).floor() as i64;
    (l0..=l1).flat_map(move |l| (k0..=k1).map(move |k| Complex::new(k as f64, l as f64) * spacing))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// `(1 - r^2)^3`.
    Bump,
    /// `exp(-r^2) (1 - r^2)^3`.
    GaussianBump,
}

/// Radial test function supported in the unit disk, with cached norms.
#[derive(Clone, Copy, Debug)]
pub struct TestFunction {
    pub profile: Profile,
    pub support_radius: f64,
    /// `int h dm`.
    pub integral: f64,
    pub norm_sq: f64,
    pub grad_norm_sq: f64,
    pub laplacian_norm_sq: f64,
}

/// Number of Simpson intervals for the radial norm integrals.
const NORM_STEPS: usize = 4000;

impl TestFunction {
    pub fn new(profile: Profile) -> Self {
        Self::with_steps(profile, NORM_STEPS)
    }

    pub fn bump() -> Self {
        Self::new(Profile::Bump)
    }

    pub fn gaussian_bump() -> Self {
        Self::new(Profile::GaussianBump)
    }

    /// Norms by composite Simpson's rule in the radius with `steps` intervals.
    pub fn with_steps(profile: Profile, steps: usize) -> Self {
        let steps = steps + steps % 2;
        let integrate = |g: &dyn Fn(f64) -> f64| {
            let dr = 1.0 / steps as f64;
            let mut acc = g(0.0) + g(1.0);
            for i in 1..steps {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * dr);
            }
            2.0 * PI * acc * dr / 3.0
        };
        let d = |r: f64| radial_derivatives(profile, r);
        Self {
            profile,
            support_radius: 1.0,
            integral: integrate(&|r| d(r)[0] * r),
            norm_sq: integrate(&|r| d(r)[0].powi(2) * r),
            grad_norm_sq: integrate(&|r| d(r)[1].powi(2) * r),
            laplacian_norm_sq: integrate(&|r| {
                let [_, f1, f2] = d(r);
                // f'/r -> f''(0) at the origin for these even profiles
                let lap = if r > 0.0 { f2 + f1 / r } else { 2.0 * f2 };
                lap * lap * r
            }),
        }
    }

    pub fn eval(&self, z: Complex<f64>) -> f64 {
        let r = z.norm();
        if r >= self.support_radius {
            0.0
        } else {
            radial_derivatives(self.profile, r)[0]
        }
    }

    /// Expected value of the linear statistic for intensity `1/pi`.
    pub fn expected_statistic(&self, dilation: f64) -> f64 {
        dilation * self.integral / PI
    }
}

/// Profile value and its first two radial derivatives, zero outside the unit disk.
fn radial_derivatives(profile: Profile, r: f64) -> [f64; 3] {
    if r >= 1.0 {
        return [0.0; 3];
    }
    let s = 1.0 - r * r;
    let b = s * s * s;
    let b1 = -6.0 * r * s * s;
    let b2 = -6.0 * s * s + 24.0 * r * r * s;
    match profile {
        Profile::Bump => [b, b1, b2],
        Profile::GaussianBump => {
            let e = (-r * r).exp();
            [e * b, e * (b1 - 2.0 * r * b), e * (b2 - 4.0 * r * b1 - 2.0 * b + 4.0 * r * r * b)]
        }
    }
}

/// `sum_{z in S} h(z / sqrt(L))`.
pub fn linear_statistic(sample: &PointProcessSample, h: &TestFunction, dilation: f64) -> Result<f64> {
    if !(dilation > 0.0) {
        return Err(Error::InvalidArgument(format!("dilation must be positive, got {dilation}")));
    }
    let needed = h.support_radius * dilation.sqrt();
    let available = sample.window.inradius_at(Complex::new(0.0, 0.0));
    if available < needed {
        return Err(Error::InsufficientWindow { needed, available });
    }
    let scale = 1.0 / dilation.sqrt();
    Ok(sample.points.iter().map(|&z| h.eval(z * scale)).sum())
}

/// Per-dilation summary of the linear statistic.
#[derive(Clone, Debug)]
pub struct VarianceRow {
    pub dilation: f64,
    pub trials: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub expected_mean: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub model: ProcessModel,
    pub rows: Vec<VarianceRow>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
}

impl VarianceReport {
    pub fn slope_half_width(&self) -> f64 {
        (self.slope_ci.1 - self.slope_ci.0) / 2.0
    }
}

/// Seed of one draw in the variance experiment.
pub fn trial_seed(seed: u64, model: ProcessModel, dilation: f64, trial: u64) -> u64 {
    derive_seed(seed, &[model.tag(), dilation.to_bits(), trial])
}

/// Samples the linear statistic `trials` times at each dilation and fits
/// `log Var` against `log L`. The slope interval is a bootstrap percentile
/// interval from resampling trials independently at every dilation; an
/// interval wider than `0.3` on either side is an error.
pub fn variance_scaling(
    model: ProcessModel,
    h: &TestFunction,
    dilations: &[f64],
    trials: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if dilations.len() < 2 || trials < 2 {
        return Err(Error::InvalidArgument("need two dilations and two trials".into()));
    }
    let mut rows = Vec::with_capacity(dilations.len());
    let mut boot_vars = Vec::with_capacity(dilations.len());
    for (i, &l) in dilations.iter().enumerate() {
        let window = Window::centered_square(h.support_radius * l.sqrt() + WINDOW_MARGIN)?;
        let values = (0..trials as u64)
            .into_par_iter()
            .map(|t| linear_statistic(&sample_process(model, window, trial_seed(seed, model, l, t))?, h, l))
            .collect::<Result<Vec<f64>>>()?;
        let var = variance(&values);
        let bseed = derive_seed(seed, &[model.tag(), i as u64, 0xb0]);
        let vars = bootstrap_in_order(&values, RESAMPLES, bseed, variance);
        let mut sorted = vars.clone();
        sorted.sort_by(f64::total_cmp);
        let (ci_lo, ci_hi) = percentile_interval(&sorted, 0.95);
        let mean = crate::stats::mean(&values);
        rows.push(VarianceRow {
            dilation: l,
            trials,
            mean,
            mean_se: (var / trials as f64).sqrt(),
            expected_mean: h.expected_statistic(l),
            variance: var,
            ci_lo,
            ci_hi,
            values,
        });
        boot_vars.push(vars);
    }
    let x: Vec<f64> = dilations.iter().map(|l| l.ln()).collect();
    let w = vec![1.0; x.len()];
    let fit_slope = |vars: &[f64]| -> f64 {
        if vars.iter().any(|v| !(*v > 0.0)) {
            return f64::NAN;
        }
        let y: Vec<f64> = vars.iter().map(|v| v.ln()).collect();
        weighted_line_fit(&x, &y, &w).map_or(f64::NAN, |f| f.slope)
    };
    let slope = fit_slope(&rows.iter().map(|r| r.variance).collect::<Vec<_>>());
    let mut slopes: Vec<f64> = (0..RESAMPLES)
        .map(|r| fit_slope(&boot_vars.iter().map(|v| v[r]).collect::<Vec<_>>()))
        .filter(|s| s.is_finite())
        .collect();
    if slopes.is_empty() || !slope.is_finite() {
        return Err(Error::Degenerate(format!("{} statistic has zero variance", model.name())));
    }
    slopes.sort_by(f64::total_cmp);
    let slope_ci = percentile_interval(&slopes, 0.95);
    let report = VarianceReport {
        model,
        rows,
        slope,
        slope_ci,
    };
    if report.slope_half_width() > MAX_SLOPE_HALF_WIDTH {
        return Err(Error::SlopeCiTooWide {
            half_width: report.slope_half_width(),
        });
    }
    Ok(report)
}

/// Variance of the linear statistic at dilation `L`, computed without
/// sampling.
///
/// * Deleted lattice: `p (1 - p) sum_x h(x / sqrt L)^2`.
/// * Displaced lattice: `sum_x Var h((x + eta) / sqrt L)`, the expectation
///   over `eta` by a tensor trapezoid rule on `[-6, 6]^2`.
/// * GEF zeros: `log|psi|` with the `exp(-|z|^2/2)` normalisation has
///   covariance `Li2(exp(-|z - w|^2)) / 4`, so the variance is a quadratic
///   form in `Delta h` evaluated here through its Hankel transform.
pub fn exact_variance(model: ProcessModel, h: &TestFunction, dilation: f64) -> f64 {
    let sl = dilation.sqrt();
    match model {
        ProcessModel::BernoulliLattice => {
            let w = Window::centered_square(h.support_radius * sl + 1.0).expect("positive half-width");
            lattice_in(&w, FRAC_PI_2.sqrt()).map(|x| 0.25 * h.eval(x / sl).powi(2)).sum()
        }
        ProcessModel::GaussianLattice => {
            let step = 0.05;
            let n = (12.0 / step) as i32;
            let nodes: Vec<(Complex<f64>, f64)> = (0..=n)
                .flat_map(|i| (0..=n).map(move |j| Complex::new(-6.0 + i as f64 * step, -6.0 + j as f64 * step)))
                .map(|e| (e, (-e.norm_sqr()).exp() * step * step / PI))
                .collect();
            let w = Window::centered_square(h.support_radius * sl + 7.0).expect("positive half-width");
            lattice_in(&w, PI.sqrt())
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&x| {
                    let (mut m1, mut m2) = (0.0, 0.0);
                    for &(e, wt) in &nodes {
                        let v = h.eval((x + e) / sl);
                        m1 += wt * v;
                        m2 += wt * v * v;
                    }
                    m2 - m1 * m1
                })
                .sum()
        }
        ProcessModel::Gef => gef_variance(h, dilation),
    }
}

fn gef_variance(h: &TestFunction, dilation: f64) -> f64 {
    const R_STEPS: usize = 2000;
    const RHO_MAX: f64 = 400.0;
    const RHO_STEP: f64 = 0.05;
    const SERIES_TERMS: usize = 2000;
    let dr = 1.0 / R_STEPS as f64;
    let lap: Vec<f64> = (0..=R_STEPS)
        .map(|i| {
            let r = i as f64 * dr;
            let [_, f1, f2] = radial_derivatives(h.profile, r);
            if r > 0.0 {
                f2 + f1 / r
            } else {
                2.0 * f2
            }
        })
        .collect();
    let simpson = |i: usize| -> f64 {
        if i == 0 || i == R_STEPS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let n_rho = (RHO_MAX / RHO_STEP) as usize;
    let integral: f64 = (0..=n_rho)
        .into_par_iter()
        .map(|j| {
            let rho = j as f64 * RHO_STEP;
            let transform: f64 = 2.0
                * PI
                * (0..=R_STEPS)
                    .map(|i| {
                        let r = i as f64 * dr;
                        simpson(i) * lap[i] * bessel_j0(rho * r) * r
                    })
                    .sum::<f64>()
                * dr
                / 3.0;
            // sum_n pi / (n^3 L) exp(-rho^2 / (4 n L)), tail bounded by the
            // first-order term
            let mut kernel = 0.0;
            for n in 1..=SERIES_TERMS {
                let n = n as f64;
                kernel += PI / (n * n * n * dilation) * (-rho * rho / (4.0 * n * dilation)).exp();
            }
            kernel += PI / dilation / (2.0 * (SERIES_TERMS as f64).powi(2));
            let w = if j == 0 || j == n_rho { 0.5 } else { 1.0 };
            w * transform * transform * kernel * rho
        })
        .sum::<f64>()
        * RHO_STEP;
    integral / (16.0 * PI * PI) / (2.0 * PI)
}

/// Bessel function `J0`, polynomial approximations with absolute error below 1e-7.
fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 3.0 {
        let y = (x / 3.0).powi(2);
        1.0 + y * (-2.2499997 + y * (1.2656208 + y * (-0.3163866 + y * (0.0444479 + y * (-0.0039444 + y * 0.0002100)))))
    } else {
        let y = 3.0 / x;
        let f0 = 0.79788456
            + y * (-0.00000077 + y * (-0.00552740 + y * (-0.00009512 + y * (0.00137237 + y * (-0.00072805 + y * 0.00014476)))));
        let t0 = x - std::f64::consts::FRAC_PI_4
            + y * (-0.04166397 + y * (-0.00003954 + y * (0.00262573 + y * (-0.00054125 + y * (-0.00029333 + y * 0.00013558)))));
        f0 * t0.cos() / x.sqrt()
    }
}

/// Least-squares slope of `log Var` against `log L` for exact variances.
pub fn exact_slope(model: ProcessModel, h: &TestFunction, dilations: &[f64]) -> f64 {
    let x: Vec<f64> = dilations.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = dilations.iter().map(|&l| exact_variance(model, h, l).ln()).collect();
    weighted_line_fit(&x, &y, &vec![1.0; x.len()]).map_or(f64::NAN, |f| f.slope)
}
