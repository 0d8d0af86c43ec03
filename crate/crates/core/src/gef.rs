//! The Gaussian entire function `psi(z) = sum_k zeta_k z^k / sqrt(k!)` and its
//! potential `phi(z) = log|psi(z)| / 2 - |z|^2 / 4`.
//!
//! Evaluation never forms the monomial coefficients `zeta_k / sqrt(k!)`
//! directly: at the radii used here they under- and overflow. Instead the
//! terms `z^k / sqrt(k!)` are generated outward from the dominant index
//! `k* ~ |z|^2` with all magnitudes scaled by the dominant term, and the scale
//! is returned separately in log form.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::rng::GaussianStream;
use crate::scalar::Scalar;

/// Terms below this fraction of the dominant term are dropped.
const TERM_CUTOFF: f64 = 1e-24;

/// Truncated coefficient sequence `zeta_0 .. zeta_N`.
#[derive(Clone, Debug)]
pub struct CoeffVector<T: Scalar = f64> {
    seed: u64,
    coeffs: Vec<Complex<T>>,
    ln_factorial: Vec<T>,
    sqrt_k: Vec<T>,
}

impl<T: Scalar> CoeffVector<T> {
    /// Wraps explicit coefficients (used for hand-built test functions).
    pub fn from_coeffs(coeffs: Vec<Complex<T>>) -> Self {
        assert!(!coeffs.is_empty(), "at least zeta_0 is required");
        Self::with_seed(0, coeffs)
    }

    fn with_seed(seed: u64, coeffs: Vec<Complex<T>>) -> Self {
        let n = coeffs.len();
        let mut ln_factorial = Vec::with_capacity(n + 1);
        let mut acc = 0.0f64;
        ln_factorial.push(T::zero());
        for k in 1..=n {
            acc += (k as f64).ln();
            ln_factorial.push(T::lit(acc));
        }
        let sqrt_k = (0..=n + 1).map(|k| T::lit((k as f64).sqrt())).collect();
        Self {
            seed,
            coeffs,
            ln_factorial,
            sqrt_k,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn max_modulus(&self) -> T {
        self.coeffs
            .iter()
            .map(|c| c.norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `ln k!`, for `k <= degree + 1`.
    pub fn ln_factorial(&self, k: usize) -> T {
        self.ln_factorial[k]
    }
}

/// Draws `zeta_0 .. zeta_degree` from the counter-based stream keyed by `seed`.
pub fn sample_coefficients<T: Scalar>(seed: u64, degree: usize) -> CoeffVector<T> {
    let mut stream = GaussianStream::new(seed);
    let coeffs = (0..=degree)
        .map(|_| {
            let w = stream.next_gaussian();
            Complex::new(T::lit(w.re), T::lit(w.im))
        })
        .collect();
    CoeffVector::with_seed(seed, coeffs)
}

/// Smallest `N` with `sum_{k>N} radius^{2k} / k! <= tol^2`, so that the RMS
/// truncation error of `psi` on the closed disk of this radius is at most `tol`.
pub fn truncation_degree(radius: f64, tol: f64) -> Result<usize> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {radius}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tol must lie in (0, 1), got {tol}")));
    }
    if radius == 0.0 {
        return Ok(0);
    }
    // log of the k-th term, 2k ln r - ln k!, summed in log space.
    let two_ln_r = 2.0 * radius.ln();
    let r2 = radius * radius;
    let mut log_terms = Vec::new();
    let mut ln_fact = 0.0f64;
    let mut peak = f64::NEG_INFINITY;
    for k in 0usize.. {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let t = k as f64 * two_ln_r - ln_fact;
        peak = peak.max(t);
        log_terms.push(t);
        // past 2 r^2 the ratio of consecutive terms is below 1/2
        if (k as f64) > 2.0 * r2 + 10.0 && t < peak - 80.0 && t < 2.0 * tol.ln() - 80.0 {
            break;
        }
    }
    let log_target = 2.0 * tol.ln();
    // suffix log-sum-exp: tail[N] = log sum_{k > N} term_k
    let mut tail = f64::NEG_INFINITY;
    let mut answer = log_terms.len() - 1;
    for n in (0..log_terms.len()).rev() {
        if tail > log_target {
            break;
        }
        answer = n;
        tail = log_add(tail, log_terms[n]);
    }
    Ok(answer)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `psi` and `psi'` at one point, both divided by `exp(log_scale)`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledPsi<T: Scalar = f64> {
    pub value: Complex<T>,
    pub derivative: Complex<T>,
    pub log_scale: T,
}

impl<T: Scalar> ScaledPsi<T> {
    /// `ln |psi|`, `-inf` at an exact zero.
    pub fn ln_abs(&self) -> T {
        let m = self.value.norm();
        if m == T::zero() {
            T::neg_infinity()
        } else {
            m.ln() + self.log_scale
        }
    }

    /// Newton step `psi / psi'`; scale-free.
    pub fn newton_step(&self) -> Complex<T> {
        self.value / self.derivative
    }
}

/// Evaluates `psi(z)` and `psi'(z)` with the dominant-term scaling.
pub fn evaluate_scaled<T: Scalar>(coeffs: &CoeffVector<T>, z: Complex<T>) -> ScaledPsi<T> {
    let n = coeffs.degree();
    let c = &coeffs.coeffs;
    let r = z.norm();
    if r == T::zero() {
        return ScaledPsi {
            value: c[0],
            derivative: if n >= 1 { c[1] } else { Complex::new(T::zero(), T::zero()) },
            log_scale: T::zero(),
        };
    }
    let r2 = r * r;
    let k_star = r2.floor().to_usize().unwrap_or(usize::MAX).min(n);
    let log_scale = T::from_usize_lossy(k_star) * r.ln() - T::lit(0.5) * coeffs.ln_factorial[k_star];
    let unit = z / r;
    let a_star = unit.powi(k_star as i32);
    let cut2 = T::lit(TERM_CUTOFF * TERM_CUTOFF);

    let mut value = Complex::new(T::zero(), T::zero());
    let mut derivative = value;

    // upward: a_{j+1} = a_j z / sqrt(j+1)
    let mut a = a_star;
    let mut j = k_star;
    loop {
        value += c[j] * a;
        if j < n {
            derivative += c[j + 1] * a * coeffs.sqrt_k[j + 1];
        }
        if j == n || a.norm_sqr() < cut2 {
            break;
        }
        a = a * z / coeffs.sqrt_k[j + 1];
        j += 1;
    }

    // downward: a_{j-1} = a_j sqrt(j) / z
    let inv_z = z.inv();
    let mut a = a_star;
    let mut j = k_star;
    while j > 0 && a.norm_sqr() >= cut2 {
        a = a * inv_z * coeffs.sqrt_k[j];
        j -= 1;
        value += c[j] * a;
        derivative += c[j + 1] * a * coeffs.sqrt_k[j + 1];
    }

    ScaledPsi {
        value,
        derivative,
        log_scale,
    }
}

/// `(psi(z), psi'(z))` in absolute units. Overflows to infinity once
/// `|z|^2 / 2` exceeds the exponent range of `T`; use [`evaluate_scaled`]
/// for anything that only needs ratios or logarithms.
pub fn evaluate_psi<T: Scalar>(coeffs: &CoeffVector<T>, z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let s = evaluate_scaled(coeffs, z);
    let f = s.log_scale.exp();
    (s.value * f, s.derivative * f)
}

/// `phi(z) = log|psi(z)| / 2 - |z|^2 / 4`; `-inf` where `psi(z) = 0`.
pub fn evaluate_potential<T: Scalar>(coeffs: &CoeffVector<T>, z: Complex<T>) -> T {
    potential_from_scaled(&evaluate_scaled(coeffs, z), z)
}

pub(crate) fn potential_from_scaled<T: Scalar>(s: &ScaledPsi<T>, z: Complex<T>) -> T {
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let ln_abs = s.ln_abs();
    if ln_abs == T::neg_infinity() {
        return T::neg_infinity();
    }
    half * ln_abs - quarter * z.norm_sqr()
}

/// Gradient of `phi` as `[d/dx, d/dy]`.
///
/// For analytic `psi`, `grad log|psi| = conj(psi'/psi)` read as a plane
/// vector, hence `grad phi = conj(psi'/psi) / 2 - z / 2`.
pub fn gradient_potential<T: Scalar>(coeffs: &CoeffVector<T>, z: Complex<T>) -> Result<[T; 2]> {
    gradient_from_scaled(&evaluate_scaled(coeffs, z), z)
}

pub(crate) fn gradient_from_scaled<T: Scalar>(s: &ScaledPsi<T>, z: Complex<T>) -> Result<[T; 2]> {
    let modulus = s.value.norm();
    if modulus <= underflow_floor::<T>() {
        return Err(Error::AtZero {
            re: z.re.to_f64_lossy(),
            im: z.im.to_f64_lossy(),
            modulus: modulus.to_f64_lossy(),
        });
    }
    let half = T::lit(0.5);
    let g = (s.derivative / s.value).conj() * half - z * half;
    Ok([g.re, g.im])
}

fn underflow_floor<T: Scalar>() -> T {
    T::min_positive_value().sqrt()
}

/// A sample of `psi` together with the disk on which its truncation is trusted.
#[derive(Clone, Debug)]
pub struct GefSample<T: Scalar = f64> {
    pub coeffs: CoeffVector<T>,
    pub reliable_radius: T,
    pub truncation_tol: T,
}

impl<T: Scalar> GefSample<T> {
    /// Samples `psi` with the degree needed for `reliable_radius` at `tol`.
    pub fn new(seed: u64, reliable_radius: f64, tol: f64) -> Result<Self> {
        let degree = truncation_degree(reliable_radius, tol)?;
        Ok(Self {
            coeffs: sample_coefficients(seed, degree),
            reliable_radius: T::lit(reliable_radius),
            truncation_tol: T::lit(tol),
        })
    }

    /// Wraps explicit coefficients; the truncation is exact, so any radius
    /// is reliable.
    pub fn from_coeffs(coeffs: Vec<Complex<T>>, reliable_radius: T) -> Self {
        Self {
            coeffs: CoeffVector::from_coeffs(coeffs),
            reliable_radius,
            truncation_tol: T::zero(),
        }
    }

    pub fn scaled(&self, z: Complex<T>) -> ScaledPsi<T> {
        evaluate_scaled(&self.coeffs, z)
    }

    pub fn psi(&self, z: Complex<T>) -> (Complex<T>, Complex<T>) {
        evaluate_psi(&self.coeffs, z)
    }

    pub fn potential(&self, z: Complex<T>) -> T {
        evaluate_potential(&self.coeffs, z)
    }

    pub fn gradient(&self, z: Complex<T>) -> Result<[T; 2]> {
        gradient_potential(&self.coeffs, z)
    }
}
