//! Basins of the descent flow `dz/dt = -grad phi`: every start point is
//! followed until it falls into a zero, leaves the disk of known zeros, or
//! runs out of steps.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::field::{GridShape, IndexRect};
use crate::gef::{gradient_from_scaled, potential_from_scaled, GefSample};
use crate::rng::{derive_seed, rng_for};

/// Distance at which a trajectory is considered to have reached a zero.
pub const CAPTURE_RADIUS: f64 = 1e-3;
/// Largest increase of `phi` tolerated on an accepted step.
pub const DESCENT_SLACK: f64 = 1e-8;
pub const STEP_BUDGET: usize = 100_000;
const STALL_GRADIENT: f64 = 1e-8;
const STALL_KICK: f64 = 1e-6;
const STALL_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasinLabel {
    Zero(u32),
    Escaped,
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOutcome {
    pub label: BasinLabel,
    pub steps: usize,
    /// Largest increase of `phi` over an accepted step.
    pub max_rise: f64,
    /// Stalls resolved by a random kick.
    pub kicks: usize,
}

/// Zeros bucketed on a unit grid for nearest-neighbour queries.
pub struct ZeroIndex {
    points: Vec<Complex<f64>>,
    origin: Complex<f64>,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    /// Trajectories leaving this disk are labelled escaped.
    pub escape_radius: f64,
}

impl ZeroIndex {
    pub fn new(points: Vec<Complex<f64>>, escape_radius: f64) -> Self {
        let lo = Complex::new(-escape_radius - 1.0, -escape_radius - 1.0);
        let n = (2.0 * escape_radius + 3.0).ceil() as usize;
        let mut buckets = vec![Vec::new(); n * n];
        for (i, p) in points.iter().enumerate() {
            let bx = (p.re - lo.re).floor();
            let by = (p.im - lo.im).floor();
            if bx >= 0.0 && by >= 0.0 && (bx as usize) < n && (by as usize) < n {
                buckets[by as usize * n + bx as usize].push(i as u32);
            }
        }
        Self {
            points,
            origin: lo,
            nx: n,
            ny: n,
            buckets,
            escape_radius,
        }
    }

    pub fn points(&self) -> &[Complex<f64>] {
        &self.points
    }

    /// Nearest zero within distance 1, if any.
    pub fn nearest(&self, z: Complex<f64>) -> Option<(usize, f64)> {
        let bx = (z.re - self.origin.re).floor() as isize;
        let by = (z.im - self.origin.im).floor() as isize;
        let mut best: Option<(usize, f64)> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (bx + dx, by + dy);
                if x < 0 || y < 0 || x >= self.nx as isize || y >= self.ny as isize {
                    continue;
                }
                for &i in &self.buckets[y as usize * self.nx + x as usize] {
                    let d = (self.points[i as usize] - z).norm();
                    if d <= 1.0 && best.is_none_or(|(_, b)| d < b) {
                        best = Some((i as usize, d));
                    }
                }
            }
        }
        best
    }
}

/// Unit descent direction `-grad phi / |grad phi|`, its magnitude and `phi`.
fn direction(sample: &GefSample, z: Complex<f64>) -> Option<(Complex<f64>, f64, f64)> {
    let s = sample.scaled(z);
    let g = gradient_from_scaled(&s, z).ok()?;
    let g = Complex::new(g[0], g[1]);
    let norm = g.norm();
    if !norm.is_finite() {
        return None;
    }
    let dir = if norm > 0.0 { -g / norm } else { Complex::new(0.0, 0.0) };
    Some((dir, norm, potential_from_scaled(&s, z)))
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded step of length `h` along the unit direction field; returns
/// the fifth-order point and the error estimate.
fn dopri_step(sample: &GefSample, z: Complex<f64>, k0: Complex<f64>, h: f64) -> Option<(Complex<f64>, f64)> {
    let mut k = [Complex::new(0.0, 0.0); 7];
    k[0] = k0;
    for stage in 1..7 {
        let mut p = z;
        for (j, kj) in k.iter().enumerate().take(stage) {
            p += *kj * (h * A[stage][j]);
        }
        k[stage] = direction(sample, p)?.0;
    }
    let mut hi = z;
    let mut err = Complex::new(0.0, 0.0);
    for j in 0..7 {
        hi += k[j] * (h * B5[j]);
        err += k[j] * (h * (B5[j] - B4[j]));
    }
    Some((hi, err.norm()))
}

/// Follows the descent trajectory from `start`. The flow is integrated in
/// arc length, which traces the same curves as `dz/dt = -grad phi`.
pub fn flow_to_zero(sample: &GefSample, start: Complex<f64>, zeros: &ZeroIndex) -> FlowOutcome {
    let tol = 1e-7;
    let mut z = start;
    let mut steps = 0usize;
    let mut max_rise = f64::NEG_INFINITY;
    let mut kicks = 0usize;
    let mut h: f64 = 0.05;
    let mut kick_rng = None;
    let done = |label, steps, max_rise, kicks| FlowOutcome {
        label,
        steps,
        max_rise,
        kicks,
    };
    loop {
        let near = zeros.nearest(z);
        if let Some((i, d)) = near {
            if d <= CAPTURE_RADIUS {
                return done(BasinLabel::Zero(i as u32), steps, max_rise, kicks);
            }
        }
        if z.norm() > zeros.escape_radius {
            return done(BasinLabel::Escaped, steps, max_rise, kicks);
        }
        if steps >= STEP_BUDGET {
            return done(BasinLabel::Unresolved, steps, max_rise, kicks);
        }
        let Some((dir, grad, phi)) = direction(sample, z) else {
            // psi underflowed: we are on top of a zero the index missed
            return done(
                near.map_or(BasinLabel::Unresolved, |(i, _)| BasinLabel::Zero(i as u32)),
                steps,
                max_rise,
                kicks,
            );
        };
        if grad < STALL_GRADIENT {
            if kicks == STALL_RETRIES {
                return done(BasinLabel::Unresolved, steps, max_rise, kicks);
            }
            let rng = kick_rng.get_or_insert_with(|| rng_for(derive_seed(start.re.to_bits(), &[start.im.to_bits()])));
            z += Complex::from_polar(STALL_KICK, rng.gen_range(0.0..std::f64::consts::TAU));
            kicks += 1;
            continue;
        }
        let cap = near.map_or(0.1, |(_, d)| (0.5 * d).min(0.1));
        h = h.min(cap);
        loop {
            steps += 1;
            let Some((next, err)) = dopri_step(sample, z, dir, h) else {
                h *= 0.25;
                if h < 1e-12 {
                    return done(BasinLabel::Unresolved, steps, max_rise, kicks);
                }
                continue;
            };
            let next_phi = sample.potential(next);
            let rise = next_phi - phi;
            if err <= tol && rise <= DESCENT_SLACK {
                max_rise = max_rise.max(rise);
                z = next;
                let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 4.0 };
                h = (h * grow.clamp(0.2, 4.0)).min(0.1);
                break;
            }
            h *= if err > tol { (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.5) } else { 0.5 };
            if h < 1e-12 || steps >= STEP_BUDGET {
                return done(BasinLabel::Unresolved, steps, max_rise, kicks);
            }
        }
    }
}

/// Labels of grid cells by the zero their centre flows to.
#[derive(Clone, Debug)]
pub struct BasinMap {
    pub shape: GridShape,
    pub labels: Vec<BasinLabel>,
    pub zeros: Vec<Complex<f64>>,
    /// Area per zero: cell area times (possibly fractional) cell count.
    pub areas: Vec<f64>,
    /// Largest distance between two boundary cells of each basin.
    pub diameters: Vec<f64>,
    /// Basin reaches the outermost ring of cells.
    pub touches_edge: Vec<bool>,
    pub escaped_area: f64,
    pub unresolved_area: f64,
    /// Stalls that needed a random kick.
    pub kicks: usize,
    /// Largest per-step increase of `phi` seen on any trajectory.
    pub max_rise: f64,
}

impl BasinMap {
    pub fn window_area(&self) -> f64 {
        self.shape.len() as f64 * self.shape.cell_area()
    }

    pub fn label_at(&self, ix: usize, iy: usize) -> BasinLabel {
        self.labels[self.shape.index(ix, iy)]
    }

    /// Fraction of cells at least `margin` from the grid edge that escaped.
    pub fn escaped_fraction(&self, margin: f64) -> f64 {
        let k = (margin / self.shape.spacing).ceil() as usize;
        let inner = self.shape.full_rect().erode(k);
        let (mut total, mut esc) = (0usize, 0usize);
        for iy in inner.y0..inner.y1 {
            for ix in inner.x0..inner.x1 {
                total += 1;
                esc += usize::from(self.label_at(ix, iy) == BasinLabel::Escaped);
            }
        }
        esc as f64 / total.max(1) as f64
    }

    /// Cells of basin `i`.
    pub fn cell_count(&self, i: usize) -> usize {
        self.labels.iter().filter(|&&l| l == BasinLabel::Zero(i as u32)).count()
    }
}

/// Labels every cell of `shape` and measures the basins. With
/// `supersample > 1`, cells next to a label change are split into
/// `supersample^2` sub-cells whose labels are flowed separately.
pub fn basin_partition(sample: &GefSample, zeros: &ZeroIndex, shape: &GridShape, supersample: usize) -> BasinMap {
    let outcomes: Vec<FlowOutcome> = (0..shape.len())
        .into_par_iter()
        .map(|idx| flow_to_zero(sample, shape.point_of(idx), zeros))
        .collect();
    let labels: Vec<BasinLabel> = outcomes.iter().map(|o| o.label).collect();
    let mut kicks: usize = outcomes.iter().map(|o| o.kicks).sum();
    let mut max_rise = outcomes.iter().map(|o| o.max_rise).fold(f64::NEG_INFINITY, f64::max);
    let n = zeros.points().len();
    let cell = shape.cell_area();
    // weight of each label per cell, in units of one cell
    let mut areas = vec![0.0; n];
    let mut escaped = 0.0;
    let mut unresolved = 0.0;
    let mut add = |label: BasinLabel, w: f64, areas: &mut Vec<f64>| match label {
        BasinLabel::Zero(i) => areas[i as usize] += w,
        BasinLabel::Escaped => escaped += w,
        BasinLabel::Unresolved => unresolved += w,
    };
    let boundary = boundary_cells(shape, &labels);
    let refine: Vec<usize> = if supersample > 1 {
        (0..shape.len()).filter(|&i| boundary[i]).collect()
    } else {
        Vec::new()
    };
    let refined: Vec<Vec<FlowOutcome>> = refine
        .par_iter()
        .map(|&idx| {
            let c = shape.point_of(idx);
            let h = shape.spacing;
            let k = supersample;
            (0..k * k)
                .map(|s| {
                    let off = Complex::new(
                        ((s % k) as f64 + 0.5) / k as f64 - 0.5,
                        ((s / k) as f64 + 0.5) / k as f64 - 0.5,
                    ) * h;
                    flow_to_zero(sample, c + off, zeros)
                })
                .collect()
        })
        .collect();
    let mut is_refined = vec![false; shape.len()];
    for (&idx, subs) in refine.iter().zip(&refined) {
        is_refined[idx] = true;
        let w = 1.0 / subs.len() as f64;
        for o in subs {
            add(o.label, w, &mut areas);
            kicks += o.kicks;
            max_rise = max_rise.max(o.max_rise);
        }
    }
    for (idx, &l) in labels.iter().enumerate() {
        if !is_refined[idx] {
            add(l, 1.0, &mut areas);
        }
    }
    for a in areas.iter_mut() {
        *a *= cell;
    }
    let (diameters, touches_edge) = basin_geometry(shape, &labels, &boundary, n);
    BasinMap {
        shape: *shape,
        labels,
        zeros: zeros.points().to_vec(),
        areas,
        diameters,
        touches_edge,
        escaped_area: escaped * cell,
        unresolved_area: unresolved * cell,
        kicks,
        max_rise,
    }
}

/// Cells with a 4-neighbour of a different label.
fn boundary_cells(shape: &GridShape, labels: &[BasinLabel]) -> Vec<bool> {
    let mut out = vec![false; shape.len()];
    for iy in 0..shape.ny {
        for ix in 0..shape.nx {
            let l = labels[shape.index(ix, iy)];
            let differs = |jx: usize, jy: usize| labels[shape.index(jx, jy)] != l;
            out[shape.index(ix, iy)] = (ix > 0 && differs(ix - 1, iy))
                || (iy > 0 && differs(ix, iy - 1))
                || (ix + 1 < shape.nx && differs(ix + 1, iy))
                || (iy + 1 < shape.ny && differs(ix, iy + 1));
        }
    }
    out
}

fn basin_geometry(shape: &GridShape, labels: &[BasinLabel], boundary: &[bool], n: usize) -> (Vec<f64>, Vec<bool>) {
    let full: IndexRect = shape.full_rect();
    let mut rims: Vec<Vec<Complex<f64>>> = vec![Vec::new(); n];
    let mut touches = vec![false; n];
    for (idx, &l) in labels.iter().enumerate() {
        let BasinLabel::Zero(i) = l else { continue };
        let (ix, iy) = shape.coords(idx);
        let on_edge = full.on_edge(ix, iy);
        if on_edge {
            touches[i as usize] = true;
        }
        if boundary[idx] || on_edge {
            rims[i as usize].push(shape.point_of(idx));
        }
    }
    let diameters = rims
        .iter()
        .map(|pts| {
            let mut d: f64 = 0.0;
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    d = d.max((pts[a] - pts[b]).norm());
                }
            }
            d
        })
        .collect();
    (diameters, touches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_sample() -> GefSample {
        GefSample::from_coeffs(vec![Complex::new(0.0, 0.0), Complex::new(1.0, 0.0)], 1e3)
    }

    #[test]
    fn radial_flow_for_linear_psi() {
        let s = identity_sample();
        let idx = ZeroIndex::new(vec![Complex::new(0.0, 0.0)], 6.0);
        let inside = flow_to_zero(&s, Complex::new(0.5, 0.0), &idx);
        assert_eq!(inside.label, BasinLabel::Zero(0));
        assert!(inside.max_rise <= DESCENT_SLACK);
        let outside = flow_to_zero(&s, Complex::new(1.5, 0.0), &idx);
        assert_eq!(outside.label, BasinLabel::Escaped);
        let near = flow_to_zero(&s, Complex::new(5e-4, 0.0), &idx);
        assert_eq!(near.label, BasinLabel::Zero(0));
        assert_eq!(near.steps, 0);
    }

    #[test]
    fn basin_of_linear_psi_is_unit_disk() {
        let s = identity_sample();
        let idx = ZeroIndex::new(vec![Complex::new(0.0, 0.0)], 3.0);
        let shape = GridShape::centered(1.5, 0.1);
        let map = basin_partition(&s, &idx, &shape, 1);
        let pi = std::f64::consts::PI;
        assert!((map.areas[0] - pi).abs() < 0.02 * pi, "{}", map.areas[0]);
        let total = map.areas[0] + map.escaped_area + map.unresolved_area;
        assert!((total - map.window_area()).abs() < 1e-9);
        assert!(map.diameters[0] > 1.8 && map.diameters[0] < 2.1);
        assert!(!map.touches_edge[0]);
        let fine = basin_partition(&s, &idx, &shape, 4);
        assert!((fine.areas[0] - pi).abs() < 0.005 * pi, "{}", fine.areas[0]);
    }

    #[test]
    fn zero_index_nearest() {
        let pts = vec![Complex::new(0.2, 0.1), Complex::new(-2.0, 3.0)];
        let idx = ZeroIndex::new(pts, 5.0);
        assert_eq!(idx.nearest(Complex::new(0.0, 0.0)).unwrap().0, 0);
        assert!(idx.nearest(Complex::new(3.0, -3.0)).is_none());
        assert_eq!(idx.nearest(Complex::new(-2.5, 3.5)).unwrap().0, 1);
    }
}
