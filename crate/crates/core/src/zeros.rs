//! Zeros of the truncated `psi` inside a disk.
//!
//! All `N` roots of the degree-`N` truncation are found by Aberth–Ehrlich
//! simultaneous iteration, driven by the scaled Newton ratio `psi / psi'`
//! from [`crate::gef::evaluate_scaled`]. Roots outside the requested disk
//! are discarded; truncation artifacts cluster near `|z| ~ sqrt(N)`.
//! [`count_zeros_contour`] is the independent argument-principle count.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::gef::{evaluate_scaled, GefSample};
use crate::scalar::Scalar;

/// Relative residual accepted after polishing, as a multiple of `max |zeta_k|`.
pub const RESIDUAL_FACTOR: f64 = 1e-9;
/// Roots closer than this to the disk boundary are reported as an error.
pub const BOUNDARY_GAP: f64 = 1e-6;
/// Minimum separation between distinct reported zeros.
pub const SEPARATION_FLOOR: f64 = 1e-6;
/// Contour nodes before adaptive refinement.
pub const CONTOUR_NODES: usize = 4096;

#[derive(Clone, Debug)]
pub struct ZeroSet<T: Scalar = f64> {
    pub points: Vec<Complex<T>>,
    /// Bound on the scaled residual `|psi(p)| / exp(log_scale)` of every point.
    pub residual_bound: T,
    pub disk_radius: T,
}

impl<T: Scalar> ZeroSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_separation(&self) -> Option<T> {
        let mut best: Option<T> = None;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let d = (a - b).norm();
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AberthOptions {
    pub max_iterations: usize,
    /// A root is frozen once its correction drops below `tolerance * max(1, |z|)`.
    pub tolerance: f64,
}

impl Default for AberthOptions {
    fn default() -> Self {
        Self {
            max_iterations: 600,
            tolerance: 1e-13,
        }
    }
}

/// Aberth–Ehrlich iteration in Gauss–Seidel form.
///
/// `newton_ratio(z)` must return `p(z) / p'(z)` for the polynomial whose roots
/// are sought; `roots` holds the starting configuration and is updated in place.
pub fn aberth<T, F>(newton_ratio: F, roots: &mut [Complex<T>], opts: AberthOptions) -> Result<usize>
where
    T: Scalar,
    F: Fn(Complex<T>) -> Complex<T>,
{
    let n = roots.len();
    let tol = T::lit(opts.tolerance);
    let mut frozen = vec![false; n];
    let mut remaining = n;
    for iteration in 1..=opts.max_iterations {
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let zi = roots[i];
            let ratio = newton_ratio(zi);
            let (mut sr, mut si) = (T::zero(), T::zero());
            for (j, zj) in roots.iter().enumerate() {
                if j == i {
                    continue;
                }
                let dr = zi.re - zj.re;
                let di = zi.im - zj.im;
                let inv = (dr * dr + di * di).recip();
                sr += dr * inv;
                si -= di * inv;
            }
            let sum = Complex::new(sr, si);
            let mut step = ratio / (Complex::new(T::one(), T::zero()) - ratio * sum);
            if !(step.re.is_finite() && step.im.is_finite()) {
                // stationary point of p or collision: nudge and retry next sweep
                let nudge = T::lit(1e-7) * (T::one() + zi.norm());
                step = Complex::new(nudge, nudge * T::lit(0.5));
            }
            roots[i] = zi - step;
            if step.norm() <= tol * T::one().max(roots[i].norm()) {
                frozen[i] = true;
                remaining -= 1;
            }
        }
        if remaining == 0 {
            return Ok(iteration);
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        unconverged: remaining,
    })
}

/// `count` starting points on concentric rings filling the disk of the given
/// radius with uniform areal density, each ring rotated to break symmetry.
pub fn concentric_start<T: Scalar>(count: usize, radius: f64, twist: f64) -> Vec<Complex<T>> {
    if count == 0 {
        return Vec::new();
    }
    let rings = ((count as f64).sqrt() / 1.8).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(count);
    let mut assigned = 0usize;
    for j in 0..rings {
        let outer = (j + 1) as f64 / rings as f64;
        let target = if j + 1 == rings {
            count
        } else {
            (count as f64 * outer * outer).round() as usize
        };
        let m = target.saturating_sub(assigned);
        let rho = radius * ((j as f64 + 0.5) / rings as f64).sqrt();
        let offset = twist + 0.7 * j as f64;
        for t in 0..m {
            let angle = offset + std::f64::consts::TAU * t as f64 / m as f64;
            out.push(Complex::new(T::lit(rho * angle.cos()), T::lit(rho * angle.sin())));
        }
        assigned += m;
    }
    out
}

/// All zeros of the truncated `psi` in the closed disk `|z| <= disk_radius`.
pub fn find_zeros<T: Scalar>(sample: &GefSample<T>, disk_radius: T) -> Result<ZeroSet<T>> {
    if disk_radius > sample.reliable_radius {
        return Err(Error::InvalidArgument(format!(
            "disk radius {disk_radius} exceeds the reliable radius {}",
            sample.reliable_radius
        )));
    }
    let coeffs = &sample.coeffs;
    let degree = coeffs.degree();
    let residual_bound = T::lit(RESIDUAL_FACTOR) * coeffs.max_modulus();
    if degree == 0 {
        return Ok(ZeroSet {
            points: Vec::new(),
            residual_bound,
            disk_radius,
        });
    }
    let ratio = |z: Complex<T>| evaluate_scaled(coeffs, z).newton_step();
    let start_radius = (degree as f64).sqrt().max(1.0);

    let mut last_err = None;
    for attempt in 0..4 {
        let mut roots = concentric_start::<T>(degree, start_radius * (1.0 + 0.03 * attempt as f64), 0.37 * attempt as f64);
        if let Err(e) = aberth(ratio, &mut roots, AberthOptions::default()) {
            last_err = Some(e);
            continue;
        }
        match select_and_polish(sample, &roots, disk_radius, residual_bound) {
            Ok(points) => {
                return Ok(ZeroSet {
                    points,
                    residual_bound,
                    disk_radius,
                })
            }
            Err(e @ Error::RootNearBoundary { .. }) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::NotConverged {
        iterations: 0,
        unconverged: degree,
    }))
}

fn select_and_polish<T: Scalar>(
    sample: &GefSample<T>,
    roots: &[Complex<T>],
    disk_radius: T,
    residual_bound: T,
) -> Result<Vec<Complex<T>>> {
    let margin = T::lit(0.05);
    let gap = T::lit(BOUNDARY_GAP);
    let mut kept = Vec::new();
    for &r0 in roots.iter().filter(|z| z.norm() <= disk_radius + margin) {
        let mut z = r0;
        for _ in 0..8 {
            let step = evaluate_scaled(&sample.coeffs, z).newton_step();
            if !(step.re.is_finite() && step.im.is_finite()) {
                break;
            }
            z -= step;
            if step.norm() <= T::lit(1e-15) * T::one().max(z.norm()) {
                break;
            }
        }
        let modulus = z.norm();
        if (modulus - disk_radius).abs() < gap {
            return Err(Error::RootNearBoundary {
                radius: disk_radius.to_f64_lossy(),
                modulus: modulus.to_f64_lossy(),
                gap: BOUNDARY_GAP,
            });
        }
        if modulus > disk_radius {
            continue;
        }
        let residual = evaluate_scaled(&sample.coeffs, z).value.norm();
        if !(residual <= residual_bound) {
            return Err(Error::NotConverged {
                iterations: 8,
                unconverged: 1,
            });
        }
        kept.push(z);
    }
    let floor = T::lit(SEPARATION_FLOOR);
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            if (kept[i] - kept[j]).norm() < floor {
                // two iterates collapsed onto one root
                return Err(Error::NotConverged {
                    iterations: 0,
                    unconverged: 2,
                });
            }
        }
    }
    kept.sort_by(|a, b| {
        crate::scalar::total_cmp(a.re, b.re).then(crate::scalar::total_cmp(a.im, b.im))
    });
    Ok(kept)
}

/// Winding number of `psi` along `|z| = radius`.
///
/// Phase increments are taken between consecutive nodes; any arc whose
/// increment exceeds `pi/4` is bisected, so the sum is an exact integer
/// multiple of `2 pi` up to rounding.
pub fn count_zeros_contour<T: Scalar>(sample: &GefSample<T>, radius: T) -> Result<i64> {
    let coeffs = &sample.coeffs;
    let radius_f = radius.to_f64_lossy();
    let eval = |theta: f64| {
        let z = Complex::new(T::lit(radius_f * theta.cos()), T::lit(radius_f * theta.sin()));
        evaluate_scaled(coeffs, z)
    };
    let min_distance = 1e-4;
    let mut closest = f64::INFINITY;
    let mut check = |s: &crate::gef::ScaledPsi<T>| {
        let d = s.newton_step().norm().to_f64_lossy();
        if d < closest {
            closest = d;
        }
    };
    let dtheta = std::f64::consts::TAU / CONTOUR_NODES as f64;
    let mut total = 0.0f64;
    let mut prev = eval(0.0);
    check(&prev);
    for j in 0..CONTOUR_NODES {
        let t0 = j as f64 * dtheta;
        let next = eval(t0 + dtheta);
        check(&next);
        total += arc_increment(&eval, &mut check, t0, dtheta, &prev, &next, 0);
        prev = next;
    }
    if closest < min_distance {
        return Err(Error::ZeroNearContour {
            radius: radius_f,
            distance: closest,
        });
    }
    let value = total / std::f64::consts::TAU;
    let rounded = value.round();
    if (value - rounded).abs() > 0.01 {
        return Err(Error::WindingNotInteger { value });
    }
    Ok(rounded as i64)
}

fn arc_increment<T: Scalar, E, C>(
    eval: &E,
    check: &mut C,
    t0: f64,
    dt: f64,
    a: &crate::gef::ScaledPsi<T>,
    b: &crate::gef::ScaledPsi<T>,
    depth: u32,
) -> f64
where
    E: Fn(f64) -> crate::gef::ScaledPsi<T>,
    C: FnMut(&crate::gef::ScaledPsi<T>),
{
    let inc = (b.value / a.value).arg().to_f64_lossy();
    if inc.abs() <= std::f64::consts::FRAC_PI_4 || depth >= 24 {
        return inc;
    }
    let half = 0.5 * dt;
    let mid = eval(t0 + half);
    check(&mid);
    arc_increment(eval, check, t0, half, a, &mid, depth + 1)
        + arc_increment(eval, check, t0 + half, half, &mid, b, depth + 1)
}
