//! Scalar fields on a uniform grid: the mollifier, convolutions with it, the
//! Lip(1) radius field `R` and the exact Laplacian of the smoothed potential.

use std::io::{Read, Write};

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gef::{potential_from_scaled, GefSample};
use crate::scalar::Scalar;

/// Geometry of a uniform grid; node `(ix, iy)` sits at `origin + h (ix + i iy)`
/// and represents the square cell of side `h` centred on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape<T: Scalar = f64> {
    pub origin: Complex<T>,
    pub spacing: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Scalar> GridShape<T> {
    /// Square grid covering `[-half_width, half_width]^2` with nodes on multiples of `spacing`.
    pub fn centered(half_width: T, spacing: T) -> Self {
        let n_half = (half_width / spacing).round().to_usize().unwrap_or(0);
        let extent = T::from_usize_lossy(n_half) * spacing;
        Self {
            origin: Complex::new(-extent, -extent),
            spacing,
            nx: 2 * n_half + 1,
            ny: 2 * n_half + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> Complex<T> {
        self.origin + Complex::new(T::from_usize_lossy(ix), T::from_usize_lossy(iy)) * self.spacing
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> Complex<T> {
        let (ix, iy) = self.coords(idx);
        self.point(ix, iy)
    }

    /// Node nearest to `z`, if `z` lies within half a cell of the grid.
    pub fn nearest(&self, z: Complex<T>) -> Option<(usize, usize)> {
        let fx = ((z.re - self.origin.re) / self.spacing).round();
        let fy = ((z.im - self.origin.im) / self.spacing).round();
        if fx < T::zero() || fy < T::zero() {
            return None;
        }
        let (ix, iy) = (fx.to_usize()?, fy.to_usize()?);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    pub fn cell_area(&self) -> T {
        self.spacing * self.spacing
    }

    pub fn full_rect(&self) -> IndexRect {
        IndexRect {
            x0: 0,
            x1: self.nx,
            y0: 0,
            y1: self.ny,
        }
    }
}

/// Half-open index rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl IndexRect {
    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        ix >= self.x0 && ix < self.x1 && iy >= self.y0 && iy < self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn erode(&self, by: usize) -> IndexRect {
        IndexRect {
            x0: self.x0 + by,
            x1: self.x1.saturating_sub(by),
            y0: self.y0 + by,
            y1: self.y1.saturating_sub(by),
        }
    }

    /// Whether `(ix, iy)` is on the outermost ring of the rectangle.
    pub fn on_edge(&self, ix: usize, iy: usize) -> bool {
        self.contains(ix, iy) && (ix == self.x0 || iy == self.y0 || ix + 1 == self.x1 || iy + 1 == self.y1)
    }
}

#[derive(Clone, Debug)]
pub struct GridField<T: Scalar = f64> {
    pub shape: GridShape<T>,
    pub values: Vec<T>,
    /// Region on which `values` are meaningful; NaN outside it.
    pub valid: IndexRect,
}

impl<T: Scalar> GridField<T> {
    pub fn filled(shape: GridShape<T>, value: T) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
            valid: shape.full_rect(),
        }
    }

    pub fn from_fn<F>(shape: GridShape<T>, f: F) -> Self
    where
        F: Fn(Complex<T>) -> T + Sync,
    {
        let values = (0..shape.len())
            .into_par_iter()
            .map(|idx| f(shape.point_of(idx)))
            .collect();
        Self {
            shape,
            values,
            valid: shape.full_rect(),
        }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.values[self.shape.index(ix, iy)]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: T) {
        let i = self.shape.index(ix, iy);
        self.values[i] = v;
    }

    pub fn map<F: Fn(T) -> T + Sync>(&self, f: F) -> Self {
        Self {
            shape: self.shape,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
            valid: self.valid,
        }
    }

    /// Bilinear interpolation; `None` outside the valid region.
    pub fn bilinear(&self, z: Complex<T>) -> Option<T> {
        let h = self.shape.spacing;
        let fx = (z.re - self.shape.origin.re) / h;
        let fy = (z.im - self.shape.origin.im) / h;
        let ix = fx.floor().to_isize()?;
        let iy = fy.floor().to_isize()?;
        let v = self.valid;
        if ix < v.x0 as isize || iy < v.y0 as isize || ix + 1 >= v.x1 as isize || iy + 1 >= v.y1 as isize {
            // allow sampling exactly on the last row/column
            let on_grid = fx == fx.floor() && fy == fy.floor();
            if on_grid && ix >= 0 && iy >= 0 && v.contains(ix as usize, iy as usize) {
                return Some(self.get(ix as usize, iy as usize));
            }
            return None;
        }
        let (ix, iy) = (ix as usize, iy as usize);
        let tx = fx - T::from_usize_lossy(ix);
        let ty = fy - T::from_usize_lossy(iy);
        let one = T::one();
        Some(
            self.get(ix, iy) * (one - tx) * (one - ty)
                + self.get(ix + 1, iy) * tx * (one - ty)
                + self.get(ix, iy + 1) * (one - tx) * ty
                + self.get(ix + 1, iy + 1) * tx * ty,
        )
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let v = self.valid;
        (v.y0..v.y1).flat_map(move |iy| (v.x0..v.x1).map(move |ix| self.shape.index(ix, iy)))
    }

    /// Maximum over the valid region, ignoring non-finite values.
    pub fn max_valid(&self) -> T {
        self.valid_indices()
            .map(|i| self.values[i])
            .filter(|v| v.is_finite())
            .fold(T::neg_infinity(), |a, b| a.max(b))
    }

    pub fn min_valid(&self) -> T {
        self.valid_indices()
            .map(|i| self.values[i])
            .filter(|v| v.is_finite())
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// Replaces `-inf` entries by the smallest finite value among their 3x3
    /// neighbours; returns how many entries were patched.
    pub fn patch_singular(&mut self) -> usize {
        let shape = self.shape;
        let mut patched = Vec::new();
        for (idx, v) in self.values.iter().enumerate() {
            if *v != T::neg_infinity() {
                continue;
            }
            let (ix, iy) = shape.coords(idx);
            let mut lo = T::infinity();
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                    if jx < 0 || jy < 0 || jx >= shape.nx as isize || jy >= shape.ny as isize {
                        continue;
                    }
                    let w = self.values[shape.index(jx as usize, jy as usize)];
                    if w.is_finite() {
                        lo = lo.min(w);
                    }
                }
            }
            patched.push((idx, if lo.is_finite() { lo } else { T::zero() }));
        }
        for &(idx, v) in &patched {
            self.values[idx] = v;
        }
        patched.len()
    }

    /// `x,y,value` rows over the valid region, with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,value")?;
        for idx in self.valid_indices() {
            let p = self.shape.point_of(idx);
            writeln!(out, "{},{},{}", p.re, p.im, self.values[idx])?;
        }
        Ok(())
    }

    /// Binary raster: little-endian `origin_re, origin_im, spacing` as f64,
    /// `nx, ny` as u64, then `nx * ny` f64 values in row-major order.
    pub fn write_raster<W: Write>(&self, mut out: W) -> Result<()> {
        let s = self.shape;
        for v in [s.origin.re, s.origin.im, s.spacing] {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        out.write_all(&(s.nx as u64).to_le_bytes())?;
        out.write_all(&(s.ny as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raster<R: Read>(mut input: R) -> Result<Self> {
        let mut f64_buf = [0u8; 8];
        let mut read_f64 = |inp: &mut R| -> Result<f64> {
            inp.read_exact(&mut f64_buf)?;
            Ok(f64::from_le_bytes(f64_buf))
        };
        let ore = read_f64(&mut input)?;
        let oim = read_f64(&mut input)?;
        let spacing = read_f64(&mut input)?;
        let mut u = [0u8; 8];
        input.read_exact(&mut u)?;
        let nx = u64::from_le_bytes(u) as usize;
        input.read_exact(&mut u)?;
        let ny = u64::from_le_bytes(u) as usize;
        let shape = GridShape {
            origin: Complex::new(T::lit(ore), T::lit(oim)),
            spacing: T::lit(spacing),
            nx,
            ny,
        };
        let mut values = Vec::with_capacity(nx * ny);
        for _ in 0..nx * ny {
            values.push(T::lit(read_f64(&mut input)?));
        }
        Ok(Self {
            shape,
            values,
            valid: shape.full_rect(),
        })
    }
}

/// A set of grid cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSet {
    pub nx: usize,
    pub ny: usize,
    bits: Vec<bool>,
}

impl CellSet {
    pub fn empty(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            bits: vec![false; nx * ny],
        }
    }

    pub fn for_shape<T: Scalar>(shape: &GridShape<T>) -> Self {
        Self::empty(shape.nx, shape.ny)
    }

    pub fn from_predicate<T: Scalar, F: Fn(Complex<T>) -> bool>(shape: &GridShape<T>, f: F) -> Self {
        let bits = (0..shape.len()).map(|i| f(shape.point_of(i))).collect();
        Self {
            nx: shape.nx,
            ny: shape.ny,
            bits,
        }
    }

    pub fn disk<T: Scalar>(shape: &GridShape<T>, center: Complex<T>, radius: T) -> Self {
        Self::from_predicate(shape, |p| (p - center).norm() <= radius)
    }

    pub fn rect<T: Scalar>(shape: &GridShape<T>, lo: Complex<T>, hi: Complex<T>) -> Self {
        Self::from_predicate(shape, |p| p.re >= lo.re && p.re <= hi.re && p.im >= lo.im && p.im <= hi.im)
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    #[inline]
    pub fn insert(&mut self, idx: usize) {
        self.bits[idx] = true;
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        CellSet {
            nx: self.nx,
            ny: self.ny,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        CellSet {
            nx: self.nx,
            ny: self.ny,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect(),
        }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn area<T: Scalar>(&self, shape: &GridShape<T>) -> T {
        T::from_usize_lossy(self.len()) * shape.cell_area()
    }
}

/// Radial bump `c exp(-1 / (1 - (|z|/radius)^2))`, normalized to unit mass.
#[derive(Clone, Debug)]
pub struct MollifierKernel<T: Scalar = f64> {
    pub radius: T,
    pub spacing: T,
    /// Continuous normalization constant `c`.
    pub norm_const: T,
    /// Stencil offsets `(dx, dy)` in cells, covering the open support.
    pub offsets: Vec<(isize, isize)>,
    /// Discrete weights `chi(offset) h^2`, renormalized to sum to one.
    pub weights: Vec<T>,
    /// `sum chi(offset) h^2` before renormalization.
    pub raw_mass: T,
}

/// `int_0^1 t exp(-1/(1-t^2)) dt = (1/2) int_0^1 exp(-1/s) ds`, by Simpson's rule.
fn bump_radial_integral() -> f64 {
    let n = 20_000usize;
    let h = 1.0 / n as f64;
    let f = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let mut acc = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    0.5 * acc * h / 3.0
}

impl<T: Scalar> MollifierKernel<T> {
    pub fn new(radius: T, spacing: T) -> Result<Self> {
        if !(radius > T::zero() && spacing > T::zero()) {
            return Err(Error::InvalidArgument("kernel radius and spacing must be positive".into()));
        }
        let r = radius.to_f64_lossy();
        let h = spacing.to_f64_lossy();
        let c = 1.0 / (std::f64::consts::TAU * r * r * bump_radial_integral());
        let reach = (r / h).ceil() as isize;
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d = h * ((dx * dx + dy * dy) as f64).sqrt();
                if d < r {
                    let t = d / r;
                    offsets.push((dx, dy));
                    raw.push(c * (-1.0 / (1.0 - t * t)).exp() * h * h);
                }
            }
        }
        let raw_mass: f64 = raw.iter().sum();
        Ok(Self {
            radius,
            spacing,
            norm_const: T::lit(c),
            offsets,
            weights: raw.iter().map(|w| T::lit(w / raw_mass)).collect(),
            raw_mass: T::lit(raw_mass),
        })
    }

    /// Continuous `chi(d)`.
    pub fn value_at(&self, d: Complex<T>) -> T {
        let t2 = d.norm_sqr() / (self.radius * self.radius);
        if t2 >= T::one() {
            T::zero()
        } else {
            self.norm_const * (-(T::one() - t2).recip()).exp()
        }
    }

    /// Stencil half-width in cells.
    pub fn reach(&self) -> usize {
        self.offsets.iter().map(|(dx, _)| dx.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Discrete convolution `field * chi` with cell-area weighting; the output is
/// valid on the input's valid region eroded by the stencil reach.
pub fn convolve<T: Scalar>(field: &GridField<T>, kernel: &MollifierKernel<T>) -> Result<GridField<T>> {
    let shape = field.shape;
    let valid = field.valid.erode(kernel.reach());
    if valid.is_empty() {
        return Err(Error::EmptyValidRegion);
    }
    let values: Vec<T> = (0..shape.ny)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let row: Vec<T> = (0..shape.nx)
                .map(|ix| {
                    if !valid.contains(ix, iy) {
                        return T::nan();
                    }
                    let mut acc = T::zero();
                    for (&(dx, dy), &w) in kernel.offsets.iter().zip(&kernel.weights) {
                        let jx = (ix as isize + dx) as usize;
                        let jy = (iy as isize + dy) as usize;
                        acc += w * field.values[shape.index(jx, jy)];
                    }
                    acc
                })
                .collect();
            row
        })
        .collect();
    Ok(GridField { shape, values, valid })
}

const BLOCK: usize = 8;

/// The upper envelope `R(z) = max_w ( sqrt(C (1 + F(w))) - |w - z| )` over the
/// valid nodes `w` of `F`, evaluated exactly by block branch-and-bound.
#[derive(Clone, Debug)]
pub struct RadiusEnvelope<T: Scalar = f64> {
    shape: GridShape<T>,
    valid: IndexRect,
    /// `sqrt(C (1 + F))` on valid nodes, `-inf` elsewhere.
    peaks: Vec<T>,
    bx: usize,
    by: usize,
    block_max: Vec<T>,
    global_max: T,
    pub const_c: T,
}

impl<T: Scalar> RadiusEnvelope<T> {
    pub fn new(smoothed_abs_phi: &GridField<T>, const_c: T) -> Result<Self> {
        if !(const_c > T::zero()) {
            return Err(Error::InvalidArgument(format!("const_c must be positive, got {const_c}")));
        }
        let shape = smoothed_abs_phi.shape;
        let valid = smoothed_abs_phi.valid;
        let mut peaks = vec![T::neg_infinity(); shape.len()];
        for idx in smoothed_abs_phi.valid_indices() {
            let f = smoothed_abs_phi.values[idx];
            if !f.is_finite() {
                return Err(Error::InvalidArgument("R needs a finite input field".into()));
            }
            peaks[idx] = (const_c * (T::one() + f)).sqrt();
        }
        let bx = shape.nx.div_ceil(BLOCK);
        let by = shape.ny.div_ceil(BLOCK);
        let mut block_max = vec![T::neg_infinity(); bx * by];
        for (idx, &p) in peaks.iter().enumerate() {
            let (ix, iy) = shape.coords(idx);
            let b = (iy / BLOCK) * bx + ix / BLOCK;
            block_max[b] = block_max[b].max(p);
        }
        let global_max = block_max.iter().copied().fold(T::neg_infinity(), |a, b| a.max(b));
        Ok(Self {
            shape,
            valid,
            peaks,
            bx,
            by,
            block_max,
            global_max,
            const_c,
        })
    }

    /// Exact envelope value at an arbitrary point.
    pub fn value_at(&self, z: Complex<T>) -> T {
        let h = self.shape.spacing;
        let fx = ((z.re - self.shape.origin.re) / h).to_f64_lossy();
        let fy = ((z.im - self.shape.origin.im) / h).to_f64_lossy();
        let cx = (fx.round().max(0.0) as usize).min(self.shape.nx - 1);
        let cy = (fy.round().max(0.0) as usize).min(self.shape.ny - 1);
        let mut best = T::neg_infinity();
        let idx = self.shape.index(cx, cy);
        if self.peaks[idx].is_finite() {
            best = self.peaks[idx] - (self.shape.point(cx, cy) - z).norm();
        }
        let block_len = T::from_usize_lossy(BLOCK) * h;
        let (zbx, zby) = ((cx / BLOCK) as isize, (cy / BLOCK) as isize);
        let max_ring = self.bx.max(self.by) as isize;
        for ring in 0..=max_ring {
            // every block in this ring is at least (ring - 1) block lengths away
            if ring >= 1 && best.is_finite() {
                let lower = T::from_usize_lossy((ring - 1) as usize) * block_len;
                if self.global_max - lower <= best {
                    break;
                }
            }
            for by in (zby - ring)..=(zby + ring) {
                if by < 0 || by >= self.by as isize {
                    continue;
                }
                for bx in (zbx - ring)..=(zbx + ring) {
                    if bx < 0 || bx >= self.bx as isize {
                        continue;
                    }
                    if (by - zby).abs() != ring && (bx - zbx).abs() != ring {
                        continue;
                    }
                    self.scan_block(bx as usize, by as usize, z, &mut best);
                }
            }
        }
        best
    }

    fn scan_block(&self, bx: usize, by: usize, z: Complex<T>, best: &mut T) {
        let bmax = self.block_max[by * self.bx + bx];
        if bmax == T::neg_infinity() {
            return;
        }
        let x0 = bx * BLOCK;
        let y0 = by * BLOCK;
        let x1 = (x0 + BLOCK).min(self.shape.nx);
        let y1 = (y0 + BLOCK).min(self.shape.ny);
        // distance from z to the block's bounding box
        let lo = self.shape.point(x0, y0);
        let hi = self.shape.point(x1 - 1, y1 - 1);
        let dx = (lo.re - z.re).max(z.re - hi.re).max(T::zero());
        let dy = (lo.im - z.im).max(z.im - hi.im).max(T::zero());
        if bmax - (dx * dx + dy * dy).sqrt() <= *best {
            return;
        }
        for iy in y0..y1 {
            for ix in x0..x1 {
                let p = self.peaks[self.shape.index(ix, iy)];
                if p == T::neg_infinity() {
                    continue;
                }
                let v = p - (self.shape.point(ix, iy) - z).norm();
                if v > *best {
                    *best = v;
                }
            }
        }
    }

    /// `R` on the valid region of the input field.
    pub fn to_field(&self) -> GridField<T> {
        let shape = self.shape;
        let valid = self.valid;
        let values = (0..shape.len())
            .into_par_iter()
            .map(|idx| {
                let (ix, iy) = shape.coords(idx);
                if valid.contains(ix, iy) {
                    self.value_at(shape.point(ix, iy))
                } else {
                    T::nan()
                }
            })
            .collect();
        GridField { shape, values, valid }
    }
}

/// `R` on the grid for the smoothed `|phi|` field and constant `C`.
pub fn compute_r<T: Scalar>(smoothed_abs_phi: &GridField<T>, const_c: T) -> Result<GridField<T>> {
    Ok(RadiusEnvelope::new(smoothed_abs_phi, const_c)?.to_field())
}

/// `Delta (phi * chi) = pi sum_z chi(. - z) - 1`, assembled from the zero set.
pub fn laplacian_u<T: Scalar>(zeros: &[Complex<T>], kernel: &MollifierKernel<T>, shape: &GridShape<T>) -> GridField<T> {
    let mut field = GridField::filled(*shape, -T::one());
    let h = shape.spacing;
    let pi = T::PI();
    for &z in zeros {
        let lo_x = ((z.re - kernel.radius - shape.origin.re) / h).ceil();
        let hi_x = ((z.re + kernel.radius - shape.origin.re) / h).floor();
        let lo_y = ((z.im - kernel.radius - shape.origin.im) / h).ceil();
        let hi_y = ((z.im + kernel.radius - shape.origin.im) / h).floor();
        let clamp = |v: T, n: usize| -> Option<usize> {
            let v = v.to_f64_lossy();
            if v < 0.0 {
                Some(0)
            } else if v >= n as f64 {
                None
            } else {
                Some(v as usize)
            }
        };
        let (Some(x0), Some(y0)) = (clamp(lo_x, shape.nx), clamp(lo_y, shape.ny)) else {
            continue;
        };
        if hi_x < T::zero() || hi_y < T::zero() {
            continue;
        }
        let x1 = (hi_x.to_f64_lossy() as usize).min(shape.nx - 1);
        let y1 = (hi_y.to_f64_lossy() as usize).min(shape.ny - 1);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let w = kernel.value_at(shape.point(ix, iy) - z);
                if w > T::zero() {
                    let i = shape.index(ix, iy);
                    field.values[i] += pi * w;
                }
            }
        }
    }
    field
}

/// `1_U * chi` on the grid, computed with the discrete stencil; values in `[0, 1]`.
pub fn indicator_smoothed<T: Scalar>(set: &CellSet, kernel: &MollifierKernel<T>, shape: &GridShape<T>) -> GridField<T> {
    let mut values = vec![T::zero(); shape.len()];
    for (idx, v) in values.iter_mut().enumerate() {
        let (ix, iy) = shape.coords(idx);
        let mut acc = T::zero();
        for (&(dx, dy), &w) in kernel.offsets.iter().zip(&kernel.weights) {
            let jx = ix as isize + dx;
            let jy = iy as isize + dy;
            if jx < 0 || jy < 0 || jx >= shape.nx as isize || jy >= shape.ny as isize {
                continue;
            }
            if set.contains(shape.index(jx as usize, jy as usize)) {
                acc += w;
            }
        }
        *v = acc.min(T::one()).max(T::zero());
    }
    GridField {
        shape: *shape,
        values,
        valid: shape.full_rect(),
    }
}

/// `phi` on every grid node, with `-inf` sentinels where the evaluation hits
/// a zero exactly.
pub fn potential_grid<T: Scalar>(sample: &GefSample<T>, shape: &GridShape<T>) -> GridField<T> {
    GridField::from_fn(*shape, |z| potential_from_scaled(&sample.scaled(z), z))
}
