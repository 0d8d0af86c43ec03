//! The special metric `rho(x, y) = inf int |dz| / R` realized as shortest
//! paths on the 8-connected grid graph, with metric neighborhoods and chains.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::field::{CellSet, GridField, GridShape, IndexRect};
use crate::scalar::{total_cmp, Scalar};

const NEIGHBOURS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
const MEMO_CAPACITY: usize = 64;

struct Entry<T> {
    dist: T,
    idx: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // reversed so that `BinaryHeap` pops the smallest distance
    fn cmp(&self, other: &Self) -> Ordering {
        total_cmp(other.dist, self.dist).then(other.idx.cmp(&self.idx))
    }
}

/// Shortest-path view of a positive radius field.
///
/// Edges join 8-neighbours inside the field's valid region; an edge costs its
/// Euclidean length times the mean of `1/R` at its two ends.
pub struct SpecialMetricView<T: Scalar = f64> {
    r: GridField<T>,
    inv_r: Vec<T>,
    memo: Mutex<HashMap<usize, Arc<Vec<T>>>>,
}

/// Result of a multi-source sweep.
pub struct Sweep<T> {
    /// Distance to every cell, `inf` beyond the cutoff or outside the graph.
    pub dist: Vec<T>,
    /// Whether a cell on the edge of the valid region was reached within the cutoff.
    pub touches_edge: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chain<T: Scalar = f64> {
    pub points: Vec<Complex<T>>,
    /// Number of steps `N`; `points` holds `N + 1` entries.
    pub index: usize,
}

impl<T: Scalar> SpecialMetricView<T> {
    pub fn new(r: GridField<T>) -> Result<Self> {
        let mut inv_r = vec![T::zero(); r.values.len()];
        for idx in r.valid_indices() {
            let v = r.values[idx];
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidArgument(format!("radius field must be positive and finite, found {v}")));
            }
            inv_r[idx] = v.recip();
        }
        if r.valid.is_empty() {
            return Err(Error::EmptyValidRegion);
        }
        Ok(Self {
            r,
            inv_r,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn r_field(&self) -> &GridField<T> {
        &self.r
    }

    pub fn shape(&self) -> &GridShape<T> {
        &self.r.shape
    }

    pub fn valid(&self) -> IndexRect {
        self.r.valid
    }

    /// `R` at a node index.
    pub fn r_at(&self, idx: usize) -> T {
        self.r.values[idx]
    }

    /// `R` at an arbitrary point by bilinear interpolation.
    pub fn r_interp(&self, z: Complex<T>) -> Option<T> {
        self.r.bilinear(z)
    }

    /// Valid node nearest to `z`.
    pub fn cell_of(&self, z: Complex<T>) -> Option<usize> {
        let (ix, iy) = self.r.shape.nearest(z)?;
        self.r.valid.contains(ix, iy).then(|| self.r.shape.index(ix, iy))
    }

    fn sweep_inner(&self, sources: &[usize], cutoff: T, target: Option<usize>, bounds: IndexRect) -> Sweep<T> {
        let shape = self.r.shape;
        let valid = self.r.valid;
        let graph = IndexRect {
            x0: valid.x0.max(bounds.x0),
            x1: valid.x1.min(bounds.x1),
            y0: valid.y0.max(bounds.y0),
            y1: valid.y1.min(bounds.y1),
        };
        let h = shape.spacing;
        let diag = h * T::lit(std::f64::consts::SQRT_2);
        let half = T::lit(0.5);
        let mut dist = vec![T::infinity(); shape.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            let (ix, iy) = shape.coords(s);
            if graph.contains(ix, iy) && dist[s] > T::zero() {
                dist[s] = T::zero();
                heap.push(Entry { dist: T::zero(), idx: s });
            }
        }
        let mut touches_edge = false;
        while let Some(Entry { dist: d, idx }) = heap.pop() {
            if d > dist[idx] {
                continue;
            }
            let (ix, iy) = shape.coords(idx);
            if valid.on_edge(ix, iy) {
                touches_edge = true;
            }
            if Some(idx) == target {
                break;
            }
            for (k, &(dx, dy)) in NEIGHBOURS.iter().enumerate() {
                let jx = ix as isize + dx;
                let jy = iy as isize + dy;
                if jx < graph.x0 as isize || jy < graph.y0 as isize || jx >= graph.x1 as isize || jy >= graph.y1 as isize {
                    continue;
                }
                let j = shape.index(jx as usize, jy as usize);
                let step = if k < 4 { h } else { diag };
                let nd = d + step * half * (self.inv_r[idx] + self.inv_r[j]);
                if nd < dist[j] && nd <= cutoff {
                    dist[j] = nd;
                    heap.push(Entry { dist: nd, idx: j });
                }
            }
        }
        Sweep { dist, touches_edge }
    }

    /// Multi-source sweep up to `cutoff`.
    pub fn sweep(&self, sources: &[usize], cutoff: T) -> Sweep<T> {
        self.sweep_inner(sources, cutoff, None, self.r.valid)
    }

    /// Sweep on the subgraph of nodes inside `bounds`. Paths may not leave
    /// the box, so the distances bound the full-graph ones from above.
    pub fn sweep_within(&self, sources: &[usize], cutoff: T, bounds: IndexRect) -> Sweep<T> {
        self.sweep_inner(sources, cutoff, None, bounds)
    }

    /// Graph distance between the nodes nearest to `x` and `y`; `inf` if
    /// either lies outside the valid region.
    pub fn distance(&self, x: Complex<T>, y: Complex<T>) -> T {
        match (self.cell_of(x), self.cell_of(y)) {
            (Some(a), Some(b)) => self.cell_distance(a, b),
            _ => T::infinity(),
        }
    }

    pub fn cell_distance(&self, a: usize, b: usize) -> T {
        if a == b {
            return T::zero();
        }
        if let Some(d) = self.memo.lock().expect("memo lock").get(&a) {
            return d[b];
        }
        self.sweep_inner(&[a], T::infinity(), Some(b), self.r.valid).dist[b]
    }

    /// Distances from one node to every node, cached per source.
    pub fn distances_from(&self, source: usize) -> Arc<Vec<T>> {
        if let Some(d) = self.memo.lock().expect("memo lock").get(&source) {
            return Arc::clone(d);
        }
        let d = Arc::new(self.sweep_inner(&[source], T::infinity(), None, self.r.valid).dist);
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        memo.insert(source, Arc::clone(&d));
        d
    }

    /// `U_{+r}` together with a flag telling whether it reached the edge of
    /// the valid region (and may therefore be truncated).
    pub fn neighborhood_clipped(&self, set: &CellSet, radius: T) -> (CellSet, bool) {
        let mut out = self.neighborhoods(set, &[radius]);
        out.pop().expect("one radius requested")
    }

    /// `U_{+r}`; fails if the neighborhood reaches the edge of the valid region.
    pub fn neighborhood(&self, set: &CellSet, radius: T) -> Result<CellSet> {
        match self.neighborhood_clipped(set, radius) {
            (_, true) => Err(Error::NeighborhoodClipped {
                radius: radius.to_f64_lossy(),
            }),
            (cells, false) => Ok(cells),
        }
    }

    /// Several neighborhoods of the same set from one sweep; each comes with
    /// its own clipping flag.
    pub fn neighborhoods(&self, set: &CellSet, radii: &[T]) -> Vec<(CellSet, bool)> {
        let sources: Vec<usize> = set.iter().collect();
        let cutoff = radii.iter().copied().fold(T::zero(), T::max);
        let sweep = self.sweep(&sources, cutoff);
        let shape = self.r.shape;
        let valid = self.r.valid;
        radii
            .iter()
            .map(|&r| {
                let mut cells = CellSet::for_shape(&shape);
                let mut clipped = false;
                for (idx, &d) in sweep.dist.iter().enumerate() {
                    if d <= r {
                        cells.insert(idx);
                        let (ix, iy) = shape.coords(idx);
                        clipped |= valid.on_edge(ix, iy);
                    }
                }
                // cells of U outside the graph are kept as members
                for idx in set.iter() {
                    cells.insert(idx);
                }
                (cells, clipped)
            })
            .collect()
    }

    /// `int |dz| / R` along a polyline, with `R` interpolated bilinearly.
    pub fn rho_length(&self, path: &[Complex<T>]) -> Option<T> {
        let h = self.r.shape.spacing;
        let mut total = T::zero();
        for seg in path.windows(2) {
            let len = (seg[1] - seg[0]).norm();
            let pieces = (len / (h * T::lit(0.25))).ceil().to_usize().unwrap_or(1).max(1);
            let n = T::from_usize_lossy(pieces);
            for k in 0..pieces {
                let t = (T::from_usize_lossy(k) + T::lit(0.5)) / n;
                let z = seg[0] + (seg[1] - seg[0]) * t;
                total += len / n / self.r_interp(z)?;
            }
        }
        Some(total)
    }

    /// Chain along a polyline: from `x_j`, the next point is the first point
    /// of the path at distance `R(x_j)/2`, or the endpoint.
    pub fn chain_index(&self, path: &[Complex<T>]) -> Option<Chain<T>> {
        let first = *path.first()?;
        let last = *path.last()?;
        let mut points = vec![first];
        let mut current = first;
        // position on the path: segment index and parameter
        let mut seg = 0usize;
        let mut t = T::zero();
        loop {
            let reach = self.r_interp(current)? * T::lit(0.5);
            let mut next = None;
            'search: while seg + 1 < path.len() {
                let a = path[seg] + (path[seg + 1] - path[seg]) * t;
                let b = path[seg + 1];
                if let Some(s) = first_exit(a, b, current, reach) {
                    // map s in [0, 1] along [a, b] back to the segment parameter
                    t = t + (T::one() - t) * s;
                    next = Some(path[seg] + (path[seg + 1] - path[seg]) * t);
                    break 'search;
                }
                seg += 1;
                t = T::zero();
            }
            match next {
                Some(p) => {
                    points.push(p);
                    current = p;
                }
                None => {
                    points.push(last);
                    break;
                }
            }
        }
        let index = points.len() - 1;
        Some(Chain { points, index })
    }
}

/// Smallest `s` in `(0, 1]` with `|a + s (b - a) - c| = r`, if the segment
/// leaves the closed disk; `None` when the whole segment stays inside.
fn first_exit<T: Scalar>(a: Complex<T>, b: Complex<T>, c: Complex<T>, r: T) -> Option<T> {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_sqr();
    if qa == T::zero() {
        return None;
    }
    let qb = T::lit(2.0) * (f.re * d.re + f.im * d.im);
    let qc = f.norm_sqr() - r * r;
    let disc = qb * qb - T::lit(4.0) * qa * qc;
    if disc < T::zero() {
        return None;
    }
    // a starts inside (qc <= 0), so the exit is the larger root
    let s = (-qb + disc.sqrt()) / (T::lit(2.0) * qa);
    (s > T::zero() && s <= T::one()).then_some(s)
}
