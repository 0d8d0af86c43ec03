//! Ball covers adapted to `R`, partitions of unity subordinate to them, and
//! the cutoff function equal to one on `U` and vanishing off `U_{+4}`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{CellSet, GridField, GridShape, IndexRect};
use crate::metric::SpecialMetricView;

/// Centers `s` with balls `B(s) = B(s; R(s)/2)`; the half-balls
/// `B(s; R(s)/4)` cover every node of `window`.
#[derive(Clone, Debug)]
pub struct BallCover {
    pub shape: GridShape,
    pub window: IndexRect,
    pub centers: Vec<Complex<f64>>,
    pub center_cells: Vec<usize>,
    /// `R(s)/2` per center.
    pub radii: Vec<f64>,
    /// Largest number of balls `B(s)` containing one node.
    pub multiplicity: usize,
}

/// Index range of nodes within `radius` of `center`, clipped to `window`.
fn bounding_box(shape: &GridShape, window: IndexRect, center: Complex<f64>, radius: f64) -> IndexRect {
    let h = shape.spacing;
    let lo = |v: f64, o: f64, min: usize| (((v - radius - o) / h).ceil().max(min as f64)) as usize;
    let hi = |v: f64, o: f64, max: usize| ((((v + radius - o) / h).floor() + 1.0).clamp(0.0, max as f64)) as usize;
    IndexRect {
        x0: lo(center.re, shape.origin.re, window.x0),
        x1: hi(center.re, shape.origin.re, window.x1),
        y0: lo(center.im, shape.origin.im, window.y0),
        y1: hi(center.im, shape.origin.im, window.y1),
    }
}

fn for_each_in_ball(shape: &GridShape, window: IndexRect, center: Complex<f64>, radius: f64, mut f: impl FnMut(usize)) {
    let b = bounding_box(shape, window, center, radius);
    for iy in b.y0..b.y1 {
        for ix in b.x0..b.x1 {
            if (shape.point(ix, iy) - center).norm() <= radius {
                f(shape.index(ix, iy));
            }
        }
    }
}

/// Greedy row-major cover: a node becomes a center unless an earlier
/// center's quarter-radius ball `B(s'; R(s')/4)` already contains it.
pub fn build_cover(r: &GridField, window: IndexRect) -> Result<BallCover> {
    let shape = r.shape;
    if window.is_empty() || window.x1 > shape.nx || window.y1 > shape.ny {
        return Err(Error::InvalidArgument("cover window must be a nonempty part of the grid".into()));
    }
    let mut covered = vec![false; shape.len()];
    let mut centers = Vec::new();
    let mut center_cells = Vec::new();
    let mut radii = Vec::new();
    for iy in window.y0..window.y1 {
        for ix in window.x0..window.x1 {
            let idx = shape.index(ix, iy);
            if covered[idx] {
                continue;
            }
            let rs = r.values[idx];
            if !(rs.is_finite() && rs > 0.0) {
                return Err(Error::InvalidArgument(format!("R must be positive on the cover window, found {rs}")));
            }
            let s = shape.point(ix, iy);
            for_each_in_ball(&shape, window, s, rs / 4.0, |j| covered[j] = true);
            centers.push(s);
            center_cells.push(idx);
            radii.push(rs / 2.0);
        }
    }
    let mut count = vec![0usize; shape.len()];
    for (s, &rad) in centers.iter().zip(&radii) {
        for_each_in_ball(&shape, window, *s, rad, |j| count[j] += 1);
    }
    Ok(BallCover {
        shape,
        window,
        centers,
        center_cells,
        radii,
        multiplicity: count.into_iter().max().unwrap_or(0),
    })
}

/// Values of one function on a rectangular patch of the grid; zero elsewhere.
#[derive(Clone, Debug)]
pub struct Patch {
    pub rect: IndexRect,
    pub values: Vec<f64>,
}

impl Patch {
    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        if self.rect.contains(ix, iy) {
            let w = self.rect.x1 - self.rect.x0;
            self.values[(iy - self.rect.y0) * w + (ix - self.rect.x0)]
        } else {
            0.0
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.rect.x1 - self.rect.x0;
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.rect.x0 + k % w, self.rect.y0 + k / w, v))
    }
}

/// Radial profile: 1 on `t <= 1/2`, 0 on `t >= 1`, C^2 in between.
fn bump_profile(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let u = 2.0 * t - 1.0;
        // factored form of 1 - u^3 (10 - 15u + 6u^2); stays nonnegative in floating point
        let v = 1.0 - u;
        v * v * v * (1.0 + 3.0 * u + 6.0 * u * u)
    }
}

#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub cover: BallCover,
    /// `f_s` per center.
    pub functions: Vec<Patch>,
    /// Smallest value of the unnormalized sum `g` on the window.
    pub min_unnormalized: f64,
    /// `max |grad f_s| R(s)` over centers and nodes at least one ball radius
    /// inside the window.
    pub gradient_const: f64,
    /// `max |hess f_s| R(s)^2`, Hessian measured as the sum of absolute second differences.
    pub hessian_const: f64,
    /// `min int f_s dm / R(s)^2` over centers whose ball lies inside the window.
    pub mass_const: f64,
}

impl PartitionOfUnity {
    pub fn sum_at(&self, idx: usize) -> f64 {
        let (ix, iy) = self.cover.shape.coords(idx);
        self.functions.iter().map(|p| p.get(ix, iy)).sum()
    }

    /// Dense copy of one `f_s`.
    pub fn dense(&self, s: usize) -> GridField {
        let shape = self.cover.shape;
        let mut out = GridField::filled(shape, 0.0);
        for (ix, iy, v) in self.functions[s].nodes() {
            out.set(ix, iy, v);
        }
        out
    }
}

/// Centered-difference gradient norm and Hessian size at `(ix, iy)` of a
/// function sampled through `get`.
fn derivatives(get: impl Fn(usize, usize) -> f64, ix: usize, iy: usize, h: f64) -> (f64, f64) {
    let c = get(ix, iy);
    let (e, w, n, s) = (get(ix + 1, iy), get(ix - 1, iy), get(ix, iy + 1), get(ix, iy - 1));
    let gx = (e - w) / (2.0 * h);
    let gy = (n - s) / (2.0 * h);
    let fxx = (e - 2.0 * c + w) / (h * h);
    let fyy = (n - 2.0 * c + s) / (h * h);
    let fxy = (get(ix + 1, iy + 1) - get(ix + 1, iy - 1) - get(ix - 1, iy + 1) + get(ix - 1, iy - 1)) / (4.0 * h * h);
    (gx.hypot(gy), fxx.abs() + fyy.abs() + 2.0 * fxy.abs())
}

pub fn build_partition(cover: &BallCover, r: &GridField) -> Result<PartitionOfUnity> {
    let shape = cover.shape;
    let window = cover.window;
    let h = shape.spacing;
    let mut sum = vec![0.0f64; shape.len()];
    let mut bumps = Vec::with_capacity(cover.centers.len());
    for (&s, &rad) in cover.centers.iter().zip(&cover.radii) {
        let rect = bounding_box(&shape, window, s, rad + h);
        let w = rect.x1 - rect.x0;
        let mut values = vec![0.0; w * (rect.y1 - rect.y0)];
        for iy in rect.y0..rect.y1 {
            for ix in rect.x0..rect.x1 {
                let v = bump_profile((shape.point(ix, iy) - s).norm() / rad);
                values[(iy - rect.y0) * w + (ix - rect.x0)] = v;
                sum[shape.index(ix, iy)] += v;
            }
        }
        bumps.push(Patch { rect, values });
    }
    let mut min_unnormalized = f64::INFINITY;
    for iy in window.y0..window.y1 {
        for ix in window.x0..window.x1 {
            min_unnormalized = min_unnormalized.min(sum[shape.index(ix, iy)]);
        }
    }
    if min_unnormalized < 0.99 {
        return Err(Error::CoveringDefect {
            min_sum: min_unnormalized,
        });
    }
    for patch in bumps.iter_mut() {
        let w = patch.rect.x1 - patch.rect.x0;
        for (k, v) in patch.values.iter_mut().enumerate() {
            let (ix, iy) = (patch.rect.x0 + k % w, patch.rect.y0 + k / w);
            if *v > 0.0 {
                *v /= sum[shape.index(ix, iy)];
            }
        }
    }
    // near the window edge the cover is truncated, so the constants are
    // measured one ball radius inside it
    let max_rad = cover.radii.iter().copied().fold(0.0, f64::max);
    let inner = window.erode((max_rad / h).ceil() as usize + 1);
    let mut gradient_const: f64 = 0.0;
    let mut hessian_const: f64 = 0.0;
    let mut mass_const = f64::INFINITY;
    for (patch, (&rad, &cell)) in bumps.iter().zip(cover.radii.iter().zip(&cover.center_cells)) {
        let rs = r.values[cell];
        let rect = patch.rect;
        for iy in rect.y0.max(inner.y0)..rect.y1.min(inner.y1) {
            for ix in rect.x0.max(inner.x0)..rect.x1.min(inner.x1) {
                let (g, hs) = derivatives(|x, y| patch.get(x, y), ix, iy, h);
                gradient_const = gradient_const.max(g * rs);
                hessian_const = hessian_const.max(hs * rs * rs);
            }
        }
        let s = shape.point_of(cell);
        let inside = bounding_box(&shape, shape.full_rect(), s, rad) == bounding_box(&shape, window, s, rad);
        if inside {
            let mass: f64 = patch.values.iter().sum::<f64>() * h * h;
            mass_const = mass_const.min(mass / (rs * rs));
        }
    }
    Ok(PartitionOfUnity {
        cover: cover.clone(),
        functions: bumps,
        min_unnormalized,
        gradient_const,
        hessian_const,
        mass_const,
    })
}

/// The cutoff `f = sum { f_s : B(s) inside U_{+4} }` with its diagnostics.
#[derive(Clone, Debug)]
pub struct Cutoff {
    pub f: GridField,
    /// Number of partition functions summed.
    pub selected: usize,
    /// `int (R |grad f| + R^2 |hess f|) dm`.
    pub seminorm: f64,
    /// `int_{U_{+4} \ U} f dm`.
    pub outer_mass: f64,
    /// `f = 1` on every node of `U`.
    pub one_on_set: bool,
    /// `f = 1` on every node of `U_{+2}`.
    pub one_on_plus2: bool,
    /// `f = 0` on every node outside `U_{+4}`.
    pub zero_off_plus4: bool,
}

impl Cutoff {
    /// `seminorm / outer_mass`, the constant the bound needs on this set.
    pub fn ratio(&self) -> f64 {
        if self.seminorm == 0.0 {
            0.0
        } else {
            self.seminorm / self.outer_mass
        }
    }
}

pub fn cutoff(set: &CellSet, metric: &SpecialMetricView, partition: &PartitionOfUnity) -> Result<Cutoff> {
    let shape = partition.cover.shape;
    let h = shape.spacing;
    let window = partition.cover.window;
    if set.is_empty() {
        return Ok(Cutoff {
            f: GridField::filled(shape, 0.0),
            selected: 0,
            seminorm: 0.0,
            outer_mass: 0.0,
            one_on_set: true,
            one_on_plus2: true,
            zero_off_plus4: true,
        });
    }
    let mut hoods = metric.neighborhoods(set, &[2.0, 4.0]).into_iter();
    let (plus2, _) = hoods.next().expect("two radii");
    let (plus4, clipped) = hoods.next().expect("two radii");
    if clipped {
        return Err(Error::NeighborhoodClipped { radius: 4.0 });
    }
    let mut f = GridField::filled(shape, 0.0);
    let mut selected = 0;
    for (s, patch) in partition.functions.iter().enumerate() {
        let center = partition.cover.centers[s];
        let rad = partition.cover.radii[s];
        let mut inside = true;
        for_each_in_ball(&shape, shape.full_rect(), center, rad, |j| inside &= plus4.contains(j));
        if !inside {
            continue;
        }
        selected += 1;
        for (ix, iy, v) in patch.nodes() {
            let i = shape.index(ix, iy);
            f.values[i] += v;
        }
    }
    let tol = 1e-9;
    let one_on = |cells: &CellSet| cells.iter().all(|i| (f.values[i] - 1.0).abs() <= tol);
    let one_on_set = one_on(set);
    let one_on_plus2 = one_on(&plus2);
    let zero_off_plus4 = (0..shape.len()).all(|i| plus4.contains(i) || f.values[i] == 0.0);
    let inner = window.erode(1);
    let mut seminorm = 0.0;
    let mut outer_mass = 0.0;
    for iy in inner.y0..inner.y1 {
        for ix in inner.x0..inner.x1 {
            let i = shape.index(ix, iy);
            let rv = metric.r_at(i);
            let (g, hs) = derivatives(|x, y| f.get(x, y), ix, iy, h);
            seminorm += (rv * g + rv * rv * hs) * h * h;
            if plus4.contains(i) && !set.contains(i) {
                outer_mass += f.values[i] * h * h;
            }
        }
    }
    Ok(Cutoff {
        f,
        selected,
        seminorm,
        outer_mass,
        one_on_set,
        one_on_plus2,
        zero_off_plus4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bump_profile_is_a_monotone_cutoff(a in 0.0f64..1.2, b in 0.0f64..1.2) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (f_lo, f_hi) = (bump_profile(lo), bump_profile(hi));
            prop_assert!((0.0..=1.0).contains(&f_lo) && (0.0..=1.0).contains(&f_hi));
            prop_assert!(f_hi <= f_lo);
        }
    }

    fn constant_r(value: f64, half: f64, h: f64) -> GridField {
        GridField::filled(GridShape::centered(half, h), value)
    }

    #[test]
    fn uniform_cover_is_a_net() {
        let r = constant_r(2.0, 5.0, 0.1);
        let window = r.shape.full_rect();
        let cover = build_cover(&r, window).unwrap();
        for i in 0..cover.centers.len() {
            for j in 0..i {
                assert!((cover.centers[i] - cover.centers[j]).norm() >= 0.5 - 1e-9);
            }
        }
        for idx in 0..r.shape.len() {
            let p = r.shape.point_of(idx);
            assert!(cover.centers.iter().any(|s| (p - s).norm() <= 0.5 + 1e-12));
        }
        assert!(cover.multiplicity >= 1 && cover.multiplicity <= 30, "{}", cover.multiplicity);
    }

    #[test]
    fn single_center_partition_is_one() {
        // the whole 0.4 x 0.4 window sits in the quarter ball of the first center
        let shape = GridShape::centered(0.2, 0.1);
        let mut r = GridField::filled(shape, 8.0);
        r.set(0, 0, 8.0);
        let cover = build_cover(&r, shape.full_rect()).unwrap();
        assert_eq!(cover.centers.len(), 1);
        let pu = build_partition(&cover, &r).unwrap();
        assert!(pu.dense(0).values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn partition_sums_to_one_and_respects_support() {
        let shape = GridShape::centered(4.0, 0.1);
        let r = GridField::from_fn(shape, |z: Complex<f64>| 1.5 + 0.3 * (z.re * 0.7).sin() + 0.2 * z.im.cos());
        let cover = build_cover(&r, shape.full_rect()).unwrap();
        let pu = build_partition(&cover, &r).unwrap();
        for idx in 0..shape.len() {
            assert!((pu.sum_at(idx) - 1.0).abs() < 1e-9);
        }
        for (s, patch) in pu.functions.iter().enumerate() {
            for (ix, iy, v) in patch.nodes() {
                assert!((0.0..=1.0).contains(&v));
                if (shape.point(ix, iy) - cover.centers[s]).norm() >= cover.radii[s] {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert!(pu.mass_const > 0.0);
        assert!(pu.gradient_const > 0.0 && pu.hessian_const > 0.0);
    }

    #[test]
    fn derivative_constants_converge_under_refinement() {
        let coarse = constant_r(2.0, 4.0, 0.1);
        let fine = constant_r(2.0, 4.0, 0.05);
        let cover = build_cover(&coarse, coarse.shape.full_rect()).unwrap();
        // same centers and radii, resampled on the finer grid
        let mut refined = cover.clone();
        refined.shape = fine.shape;
        refined.window = fine.shape.full_rect();
        refined.center_cells = cover
            .centers
            .iter()
            .map(|&s| {
                let (ix, iy) = fine.shape.nearest(s).unwrap();
                fine.shape.index(ix, iy)
            })
            .collect();
        let a = build_partition(&cover, &coarse).unwrap();
        let b = build_partition(&refined, &fine).unwrap();
        assert!((a.gradient_const / b.gradient_const - 1.0).abs() < 0.2);
        assert!((a.hessian_const / b.hessian_const - 1.0).abs() < 0.2);
    }

    #[test]
    fn covering_defect_is_reported() {
        let r = constant_r(1.0, 2.0, 0.1);
        let mut cover = build_cover(&r, r.shape.full_rect()).unwrap();
        cover.centers.truncate(3);
        cover.center_cells.truncate(3);
        cover.radii.truncate(3);
        assert!(matches!(build_partition(&cover, &r), Err(Error::CoveringDefect { .. })));
    }

    #[test]
    fn cutoff_on_disk_with_constant_r() {
        let r = constant_r(1.0, 7.0, 0.1);
        let shape = r.shape;
        let view = SpecialMetricView::new(r.clone()).unwrap();
        let cover = build_cover(&r, shape.full_rect()).unwrap();
        let pu = build_partition(&cover, &r).unwrap();
        let empty = cutoff(&CellSet::for_shape(&shape), &view, &pu).unwrap();
        assert!(empty.f.values.iter().all(|&v| v == 0.0) && empty.seminorm == 0.0);
        let disk = CellSet::disk(&shape, Complex::new(0.0, 0.0), 1.5);
        let cut = cutoff(&disk, &view, &pu).unwrap();
        assert!(cut.one_on_set && cut.one_on_plus2 && cut.zero_off_plus4);
        assert!(cut.selected > 0);
        assert!(cut.ratio() > 0.0 && cut.ratio() < 50.0, "{}", cut.ratio());
        // radial: equal values at equal radii up to the rasterization of the cover
        assert!(cut.f.values.iter().all(|&v| (-1e-12..=1.0 + 1e-9).contains(&v)));
    }
}
