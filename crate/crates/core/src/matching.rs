//! Zero-to-lattice matching: numerical checks of the Main Lemma and of the
//! Hall inequalities on sampled sets, the bounded-distance bipartite matcher
//! and a min-cost comparison matcher.

use std::collections::VecDeque;

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{laplacian_u, CellSet, GridField, GridShape, IndexRect, MollifierKernel, RadiusEnvelope};
use crate::metric::SpecialMetricView;

/// Lattice spacing: cells of area `pi`.
pub fn lattice_spacing() -> f64 {
    std::f64::consts::PI.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticePoint {
    pub k: i64,
    pub l: i64,
    pub position: Complex<f64>,
    pub interior: bool,
}

/// The points of `sqrt(pi) Z^2` in the square `[-half_width, half_width]^2`;
/// a point is interior when it is at least `buffer` from the square's edge.
#[derive(Clone, Debug)]
pub struct LatticeWindow {
    pub half_width: f64,
    pub buffer: f64,
    pub points: Vec<LatticePoint>,
}

impl LatticeWindow {
    pub fn new(half_width: f64, buffer: f64) -> Self {
        let s = lattice_spacing();
        let kmax = (half_width / s).floor() as i64;
        let mut points = Vec::new();
        for l in -kmax..=kmax {
            for k in -kmax..=kmax {
                let position = Complex::new(s * k as f64, s * l as f64);
                points.push(LatticePoint {
                    k,
                    l,
                    position,
                    interior: false,
                });
            }
        }
        let mut out = Self {
            half_width,
            buffer,
            points,
        };
        for i in 0..out.points.len() {
            out.points[i].interior = out.is_interior(out.points[i].position);
        }
        out
    }

    pub fn contains(&self, z: Complex<f64>) -> bool {
        z.re.abs() <= self.half_width && z.im.abs() <= self.half_width
    }

    pub fn is_interior(&self, z: Complex<f64>) -> bool {
        z.re.abs().max(z.im.abs()) <= self.half_width - self.buffer
    }

    pub fn positions(&self) -> Vec<Complex<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn interior_count(&self) -> usize {
        self.points.iter().filter(|p| p.interior).count()
    }
}

/// Per-node counts of zeros and lattice points plus the exact Laplacian of
/// the smoothed potential, shared by all set checks of one trial.
pub struct Verifier<'a> {
    metric: &'a SpecialMetricView,
    laplacian: GridField,
    zero_count: Vec<u32>,
    lattice_count: Vec<u32>,
}

/// `int_U Delta u` and `-int_{U_{+4}} Delta u`, each to be at most `m(U_{+4} \ U)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassBalanceReport {
    pub inner_integral: f64,
    pub outer_integral: f64,
    pub bound: f64,
    /// `U_{+4}` reached the edge of the metric's domain and was truncated;
    /// both inequalities only get harder under truncation.
    pub clipped: bool,
}

impl MassBalanceReport {
    pub fn inner_margin(&self) -> f64 {
        self.bound - self.inner_integral
    }

    pub fn outer_margin(&self) -> f64 {
        self.bound - self.outer_integral
    }

    pub fn passes(&self) -> bool {
        let tol = 1e-9 * (1.0 + self.bound.abs());
        self.inner_margin() >= -tol && self.outer_margin() >= -tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HallReport {
    pub zeros_in_set: u32,
    pub lattice_in_set: u32,
    pub zeros_plus4: u32,
    pub zeros_plus5: u32,
    pub lattice_plus1: u32,
    pub lattice_plus5: u32,
    pub area_set: f64,
    pub area_plus1: f64,
    pub area_plus4: f64,
    /// `U_{+5}` was truncated at the domain edge; every check keeps its
    /// direction, since each right-hand side grows with the neighborhood.
    pub clipped: bool,
}

impl HallReport {
    /// Named inequalities with their margins (right minus left).
    pub fn checks(&self) -> [(&'static str, f64); 6] {
        let pi = std::f64::consts::PI;
        [
            ("zeros_vs_lattice_plus5", self.lattice_plus5 as f64 - self.zeros_in_set as f64),
            ("lattice_vs_zeros_plus5", self.zeros_plus5 as f64 - self.lattice_in_set as f64),
            ("lattice_area_plus1", self.area_plus1 - pi * self.lattice_in_set as f64),
            ("area_lattice_plus1", pi * self.lattice_plus1 as f64 - self.area_set),
            ("zeros_area_plus4", self.area_plus4 - pi * self.zeros_in_set as f64),
            ("area_zeros_plus4", pi * self.zeros_plus4 as f64 - self.area_set),
        ]
    }

    pub fn passes(&self) -> bool {
        self.checks().iter().all(|(_, m)| *m >= -1e-9)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks().iter().filter(|(_, m)| *m < -1e-9).map(|(n, _)| *n).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetReport {
    pub mass: MassBalanceReport,
    pub hall: HallReport,
}

impl SetReport {
    pub fn passes(&self) -> bool {
        self.mass.passes() && self.hall.passes()
    }
}

fn count_nodes(shape: &GridShape, points: &[Complex<f64>]) -> Vec<u32> {
    let mut counts = vec![0u32; shape.len()];
    for &p in points {
        if let Some((ix, iy)) = shape.nearest(p) {
            counts[shape.index(ix, iy)] += 1;
        }
    }
    counts
}

impl<'a> Verifier<'a> {
    /// `zeros` must include every zero within the kernel radius of the grid.
    pub fn new(metric: &'a SpecialMetricView, zeros: &[Complex<f64>], lattice: &[Complex<f64>], kernel: &MollifierKernel) -> Self {
        let shape = *metric.shape();
        Self {
            metric,
            laplacian: laplacian_u(zeros, kernel, &shape),
            zero_count: count_nodes(&shape, zeros),
            lattice_count: count_nodes(&shape, lattice),
        }
    }

    pub fn laplacian(&self) -> &GridField {
        &self.laplacian
    }

    fn sum_counts(counts: &[u32], set: &CellSet) -> u32 {
        set.iter().map(|i| counts[i]).sum()
    }

    fn integral(&self, set: &CellSet) -> f64 {
        let h2 = self.laplacian.shape.cell_area();
        set.iter().map(|i| self.laplacian.values[i]).sum::<f64>() * h2
    }

    /// Both reports from one multi-source sweep.
    pub fn verify(&self, set: &CellSet) -> SetReport {
        let shape = self.metric.shape();
        let mut hoods = self.metric.neighborhoods(set, &[1.0, 4.0, 5.0]).into_iter();
        let (plus1, _) = hoods.next().expect("three radii");
        let (plus4, clipped4) = hoods.next().expect("three radii");
        let (plus5, clipped5) = hoods.next().expect("three radii");
        let area_set = set.area(shape);
        let area_plus4 = plus4.area(shape);
        let mass = MassBalanceReport {
            inner_integral: self.integral(set),
            outer_integral: -self.integral(&plus4),
            bound: area_plus4 - area_set,
            clipped: clipped4,
        };
        let hall = HallReport {
            zeros_in_set: Self::sum_counts(&self.zero_count, set),
            lattice_in_set: Self::sum_counts(&self.lattice_count, set),
            zeros_plus4: Self::sum_counts(&self.zero_count, &plus4),
            zeros_plus5: Self::sum_counts(&self.zero_count, &plus5),
            lattice_plus1: Self::sum_counts(&self.lattice_count, &plus1),
            lattice_plus5: Self::sum_counts(&self.lattice_count, &plus5),
            area_set,
            area_plus1: plus1.area(shape),
            area_plus4,
            clipped: clipped5,
        };
        SetReport { mass, hall }
    }

    pub fn verify_mass_balance(&self, set: &CellSet) -> MassBalanceReport {
        self.verify(set).mass
    }

    pub fn verify_hall(&self, set: &CellSet) -> HallReport {
        self.verify(set).hall
    }
}

/// Shape of a randomly drawn test set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SetKind {
    Disk,
    Rectangle,
    TwoDisks,
    /// Small disk around a lattice point.
    LatticeDisk,
}

impl SetKind {
    pub fn name(&self) -> &'static str {
        match self {
            SetKind::Disk => "disk",
            SetKind::Rectangle => "rectangle",
            SetKind::TwoDisks => "two_disks",
            SetKind::LatticeDisk => "lattice_disk",
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Draws a nonempty test set with its center in `[-center_half, center_half]^2`.
pub fn sample_test_set<R: Rng>(shape: &GridShape, center_half: f64, rng: &mut R) -> (SetKind, CellSet) {
    let center = |rng: &mut R| Complex::new(rng.gen_range(-center_half..=center_half), rng.gen_range(-center_half..=center_half));
    loop {
        let kind = match rng.gen_range(0..4) {
            0 => SetKind::Disk,
            1 => SetKind::Rectangle,
            2 => SetKind::TwoDisks,
            _ => SetKind::LatticeDisk,
        };
        let set = match kind {
            SetKind::Disk => {
                let c = center(rng);
                CellSet::disk(shape, c, log_uniform(rng, 0.05, 4.0))
            }
            SetKind::Rectangle => {
                let c = center(rng);
                let half = Complex::new(log_uniform(rng, 0.05, 3.0), log_uniform(rng, 0.05, 3.0));
                CellSet::rect(shape, c - half, c + half)
            }
            SetKind::TwoDisks => {
                let (a, b) = (center(rng), center(rng));
                let (ra, rb) = (log_uniform(rng, 0.05, 3.0), log_uniform(rng, 0.05, 3.0));
                CellSet::disk(shape, a, ra).union(&CellSet::disk(shape, b, rb))
            }
            SetKind::LatticeDisk => {
                let s = lattice_spacing();
                let c = center(rng);
                let snapped = Complex::new((c.re / s).round() * s, (c.im / s).round() * s);
                CellSet::disk(shape, snapped, log_uniform(rng, 0.05, 1.0))
            }
        };
        if !set.is_empty() {
            return (kind, set);
        }
    }
}

/// Maximum bipartite matching by Hopcroft–Karp. `adj[u]` lists the right
/// vertices adjacent to left vertex `u`.
pub fn hopcroft_karp(n_right: usize, adj: &[Vec<usize>]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let n_left = adj.len();
    let mut match_l = vec![None; n_left];
    let mut match_r: Vec<Option<usize>> = vec![None; n_right];
    let mut layer = vec![u32::MAX; n_left];
    loop {
        // BFS layering from free left vertices
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_l[u].is_none() {
                layer[u] = 0;
                queue.push_back(u);
            } else {
                layer[u] = u32::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v] {
                    None => found = true,
                    Some(w) if layer[w] == u32::MAX => {
                        layer[w] = layer[u] + 1;
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }
        let mut next_edge = vec![0usize; n_left];
        for u in 0..n_left {
            if match_l[u].is_none() {
                augment(u, adj, &mut match_l, &mut match_r, &layer, &mut next_edge);
            }
        }
    }
    (match_l, match_r)
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    match_l: &mut [Option<usize>],
    match_r: &mut [Option<usize>],
    layer: &[u32],
    next_edge: &mut [usize],
) -> bool {
    while next_edge[u] < adj[u].len() {
        let v = adj[u][next_edge[u]];
        next_edge[u] += 1;
        let ok = match match_r[v] {
            None => true,
            Some(w) => layer[w] == layer[u] + 1 && augment(w, adj, match_l, match_r, layer, next_edge),
        };
        if ok {
            match_l[u] = Some(v);
            match_r[v] = Some(u);
            return true;
        }
    }
    false
}

/// Makes every `interior` left vertex matched without unmatching any right
/// vertex: each free interior vertex starts an alternating path that ends at
/// a free right vertex or at a matched non-interior left vertex, which is
/// released. Returns the interior left vertices that could not be placed.
pub fn cover_interior(
    adj: &[Vec<usize>],
    match_l: &mut [Option<usize>],
    match_r: &mut [Option<usize>],
    interior: &[bool],
) -> Vec<usize> {
    let mut failed = Vec::new();
    for start in 0..adj.len() {
        if !interior[start] || match_l[start].is_some() {
            continue;
        }
        // BFS over left vertices; parent holds (previous left vertex, right vertex used)
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
        let mut seen = vec![false; adj.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut end = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v] {
                    None => {
                        end = Some((u, v, None));
                        break 'bfs;
                    }
                    Some(w) if !seen[w] => {
                        seen[w] = true;
                        parent[w] = Some((u, v));
                        if !interior[w] {
                            end = Some((u, v, Some(w)));
                            break 'bfs;
                        }
                        queue.push_back(w);
                    }
                    _ => {}
                }
            }
        }
        let Some((mut u, mut v, released)) = end else {
            failed.push(start);
            continue;
        };
        if let Some(w) = released {
            match_l[w] = None;
            // w reached through (u, v); v is re-matched below
        }
        loop {
            let prev = match_l[u];
            match_l[u] = Some(v);
            match_r[v] = Some(u);
            match (parent[u], prev) {
                (Some((pu, pv)), Some(_)) => {
                    u = pu;
                    v = pv;
                }
                _ => break,
            }
        }
    }
    failed
}

/// Rectangular assignment minimizing total cost; `cost` is `rows x cols`
/// row-major with `rows <= cols`. Returns the column of each row.
pub fn min_cost_assignment(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols && cost.len() == rows * cols);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Matcher {
    Hall,
    MinCost,
}

impl Matcher {
    pub fn name(&self) -> &'static str {
        match self {
            Matcher::Hall => "hall",
            Matcher::MinCost => "mincost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    /// Index into the lattice window.
    pub lattice: usize,
    /// Index into the zero list.
    pub zero: usize,
    pub k: i64,
    pub l: i64,
    pub displacement: Complex<f64>,
    /// Metric distance of the pair; NaN when the matcher does not use the metric.
    pub rho_cost: f64,
    /// Both ends are interior, so the pair enters statistics.
    pub interior: bool,
}

#[derive(Clone, Debug)]
pub struct Matching {
    pub matcher: Matcher,
    pub pairs: Vec<MatchedPair>,
}

impl Matching {
    pub fn interior_pairs(&self) -> impl Iterator<Item = &MatchedPair> {
        self.pairs.iter().filter(|p| p.interior)
    }

    /// `|xi|` over pairs whose lattice point is interior.
    pub fn interior_displacements(&self) -> Vec<f64> {
        self.interior_pairs().map(|p| p.displacement.norm()).collect()
    }

    pub fn mean_square_displacement(&self) -> f64 {
        let d = self.interior_displacements();
        d.iter().map(|x| x * x).sum::<f64>() / d.len().max(1) as f64
    }
}

/// Admissible zeros per lattice point: `rho <= threshold` and `|z - lambda| <= R(lambda)`.
fn admissibility(
    zeros: &[Complex<f64>],
    lattice: &LatticeWindow,
    metric: &SpecialMetricView,
    envelope: &RadiusEnvelope,
    threshold: f64,
) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let shape = *metric.shape();
    let h = shape.spacing;
    let zero_cells: Vec<Option<usize>> = zeros.iter().map(|&z| metric.cell_of(z)).collect();
    let mut adj = Vec::with_capacity(lattice.points.len());
    let mut costs = Vec::with_capacity(lattice.points.len());
    for p in &lattice.points {
        let reach = envelope.value_at(p.position);
        let near: Vec<usize> = (0..zeros.len())
            .filter(|&j| zero_cells[j].is_some() && (zeros[j] - p.position).norm() <= reach)
            .collect();
        let (mut list, mut cost) = (Vec::new(), Vec::new());
        if let (Some(src), false) = (metric.cell_of(p.position), near.is_empty()) {
            let (ix, iy) = shape.coords(src);
            let half = ((1.5 * reach + 2.0 * h) / h).ceil() as usize;
            let bounds = IndexRect {
                x0: ix.saturating_sub(half),
                x1: ix + half + 1,
                y0: iy.saturating_sub(half),
                y1: iy + half + 1,
            };
            let sweep = metric.sweep_within(&[src], threshold, bounds);
            for j in near {
                let d = sweep.dist[zero_cells[j].expect("filtered")];
                if d <= threshold {
                    list.push(j);
                    cost.push(d);
                }
            }
        }
        adj.push(list);
        costs.push(cost);
    }
    (adj, costs)
}

/// Bounded-distance matching: maximum matching on the admissibility graph,
/// repaired so every interior lattice point and every interior zero is matched.
pub fn build_matching(
    zeros: &[Complex<f64>],
    lattice: &LatticeWindow,
    metric: &SpecialMetricView,
    envelope: &RadiusEnvelope,
    threshold: f64,
) -> Result<Matching> {
    let (adj, costs) = admissibility(zeros, lattice, metric, envelope, threshold);
    let (mut match_l, mut match_r) = hopcroft_karp(zeros.len(), &adj);
    let interior_l: Vec<bool> = lattice.points.iter().map(|p| p.interior).collect();
    let interior_r: Vec<bool> = zeros.iter().map(|&z| lattice.contains(z) && lattice.is_interior(z)).collect();
    let failed_l = cover_interior(&adj, &mut match_l, &mut match_r, &interior_l);
    let mut rev = vec![Vec::new(); zeros.len()];
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            rev[v].push(u);
        }
    }
    let failed_r = cover_interior(&rev, &mut match_r, &mut match_l, &interior_r);
    if !failed_l.is_empty() || !failed_r.is_empty() {
        let first = failed_l
            .first()
            .map(|&u| lattice.points[u].position)
            .or_else(|| failed_r.first().map(|&v| zeros[v]))
            .map(|z| (z.re, z.im));
        return Err(Error::ImperfectMatching {
            unmatched_lattice: failed_l.len(),
            unmatched_zeros: failed_r.len(),
            first,
        });
    }
    let mut pairs = Vec::new();
    for (u, m) in match_l.iter().enumerate() {
        let Some(v) = *m else { continue };
        let p = lattice.points[u];
        let slot = adj[u].iter().position(|&x| x == v).expect("matched along an edge");
        pairs.push(MatchedPair {
            lattice: u,
            zero: v,
            k: p.k,
            l: p.l,
            displacement: zeros[v] - p.position,
            rho_cost: costs[u][slot],
            interior: p.interior,
        });
    }
    Ok(Matching {
        matcher: Matcher::Hall,
        pairs,
    })
}

/// Matching minimizing the total squared displacement between the lattice
/// window and the zeros inside it; the smaller side is matched completely.
pub fn min_cost_matching(zeros: &[Complex<f64>], lattice: &LatticeWindow) -> Matching {
    let inside: Vec<usize> = (0..zeros.len()).filter(|&j| lattice.contains(zeros[j])).collect();
    let n_l = lattice.points.len();
    let n_z = inside.len();
    let sq = |u: usize, j: usize| (zeros[inside[j]] - lattice.points[u].position).norm_sqr();
    let mut pairs_idx = Vec::new();
    if n_l <= n_z {
        let cost: Vec<f64> = (0..n_l).flat_map(|u| (0..n_z).map(move |j| (u, j))).map(|(u, j)| sq(u, j)).collect();
        for (u, j) in min_cost_assignment(&cost, n_l, n_z).into_iter().enumerate() {
            pairs_idx.push((u, j));
        }
    } else {
        let cost: Vec<f64> = (0..n_z).flat_map(|j| (0..n_l).map(move |u| (u, j))).map(|(u, j)| sq(u, j)).collect();
        for (j, u) in min_cost_assignment(&cost, n_z, n_l).into_iter().enumerate() {
            pairs_idx.push((u, j));
        }
    }
    pairs_idx.sort_unstable();
    let pairs = pairs_idx
        .into_iter()
        .map(|(u, j)| {
            let p = lattice.points[u];
            let z = zeros[inside[j]];
            MatchedPair {
                lattice: u,
                zero: inside[j],
                k: p.k,
                l: p.l,
                displacement: z - p.position,
                rho_cost: f64::NAN,
                interior: p.interior,
            }
        })
        .collect();
    Matching {
        matcher: Matcher::MinCost,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridShape;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    /// Largest number of pairs in any injective assignment along edges.
    fn brute_max_matching(n_right: usize, adj: &[Vec<usize>]) -> usize {
        fn go(u: usize, adj: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
            if u == adj.len() {
                return 0;
            }
            let mut best = go(u + 1, adj, used);
            for &v in &adj[u] {
                if !used[v] {
                    used[v] = true;
                    best = best.max(1 + go(u + 1, adj, used));
                    used[v] = false;
                }
            }
            best
        }
        go(0, adj, &mut vec![false; n_right])
    }

    fn brute_min_cost(cost: &[f64], n: usize) -> f64 {
        fn go(row: usize, n: usize, cost: &[f64], used: &mut Vec<bool>) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + go(row + 1, n, cost, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, n, cost, &mut vec![false; n])
    }

    #[test]
    fn hopcroft_karp_matches_brute_force() {
        let mut rng = crate::rng::rng_for(21);
        for _ in 0..200 {
            let (nl, nr) = (rng.gen_range(1..7), rng.gen_range(1..7));
            let adj: Vec<Vec<usize>> = (0..nl).map(|_| (0..nr).filter(|_| rng.gen_bool(0.35)).collect()).collect();
            let (ml, mr) = hopcroft_karp(nr, &adj);
            let size = ml.iter().filter(|m| m.is_some()).count();
            assert_eq!(size, brute_max_matching(nr, &adj));
            for (u, m) in ml.iter().enumerate() {
                if let Some(v) = m {
                    assert_eq!(mr[*v], Some(u));
                    assert!(adj[u].contains(v));
                }
            }
        }
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = crate::rng::rng_for(22);
        for _ in 0..100 {
            let n = 6;
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let a = min_cost_assignment(&cost, n, n);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            assert!((total - brute_min_cost(&cost, n)).abs() < 1e-9);
            let mut cols = a.clone();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols.len(), n);
        }
    }

    #[test]
    fn rectangular_assignment_picks_cheapest_columns() {
        // two rows, four columns; the optimum uses columns 3 and 1
        let cost = [9.0, 5.0, 7.0, 1.0, 8.0, 2.0, 6.0, 0.5];
        assert_eq!(min_cost_assignment(&cost, 2, 4), vec![3, 1]);
    }

    #[test]
    fn cover_interior_releases_boundary_vertices() {
        // left 0 is interior and only sees right 0, which HK may give to boundary left 1
        let adj = vec![vec![0], vec![0]];
        let mut ml = vec![None, Some(0)];
        let mut mr = vec![Some(1)];
        let failed = cover_interior(&adj, &mut ml, &mut mr, &[true, false]);
        assert!(failed.is_empty());
        assert_eq!(ml, vec![Some(0), None]);
        assert_eq!(mr, vec![Some(0)]);
        // two interior vertices competing for one right vertex cannot both be placed
        let mut ml = vec![None, Some(0)];
        let mut mr = vec![Some(1)];
        assert_eq!(cover_interior(&adj, &mut ml, &mut mr, &[true, true]), vec![0]);
    }

    #[test]
    fn cover_interior_follows_long_alternating_paths() {
        // chain: L0-R0, L1-R0/R1, L2-R1; L2 boundary holds R1, L1 holds R0
        let adj = vec![vec![0], vec![0, 1], vec![1]];
        let mut ml = vec![None, Some(0), Some(1)];
        let mut mr = vec![Some(1), Some(2)];
        let failed = cover_interior(&adj, &mut ml, &mut mr, &[true, true, false]);
        assert!(failed.is_empty());
        assert_eq!(ml, vec![Some(0), Some(1), None]);
        assert_eq!(mr, vec![Some(0), Some(1)]);
    }

    fn toy_metric(r: f64, half: f64) -> (SpecialMetricView, RadiusEnvelope) {
        let shape = GridShape::centered(half, 0.1);
        let field = GridField::filled(shape, 0.0);
        let env = RadiusEnvelope::new(&field, r * r).unwrap();
        (SpecialMetricView::new(env.to_field()).unwrap(), env)
    }

    #[test]
    fn single_zero_on_a_lattice_point() {
        let (metric, env) = toy_metric(1.0, 3.0);
        let lattice = LatticeWindow::new(0.5, 0.0);
        assert_eq!(lattice.points.len(), 1);
        let m = build_matching(&[c(0.0, 0.0)], &lattice, &metric, &env, 5.0).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].displacement, c(0.0, 0.0));
        let mc = min_cost_matching(&[c(0.0, 0.0)], &lattice);
        assert_eq!(mc.pairs[0].displacement, c(0.0, 0.0));
    }

    #[test]
    fn small_instances_agree_with_exhaustive_search() {
        let mut rng = crate::rng::rng_for(23);
        let (metric, env) = toy_metric(2.0, 6.0);
        let lattice = LatticeWindow::new(2.0, 0.0);
        for _ in 0..20 {
            let pick: Vec<usize> = {
                let mut idx: Vec<usize> = (0..lattice.points.len()).collect();
                for i in (1..idx.len()).rev() {
                    idx.swap(i, rng.gen_range(0..=i));
                }
                idx.truncate(5);
                idx
            };
            let sub = LatticeWindow {
                half_width: lattice.half_width,
                buffer: 0.0,
                points: pick.iter().map(|&i| lattice.points[i]).collect(),
            };
            let zeros: Vec<_> = sub
                .points
                .iter()
                .map(|p| p.position + Complex::from_polar(rng.gen_range(0.0..2.5), rng.gen_range(0.0..6.3)))
                .collect();
            let (adj, _) = admissibility(&zeros, &sub, &metric, &env, 5.0);
            let brute = brute_max_matching(zeros.len(), &adj);
            // with no interior points on either side the matcher returns a maximum matching
            let mut boundary_only = sub.clone();
            boundary_only.buffer = f64::INFINITY;
            for p in boundary_only.points.iter_mut() {
                p.interior = false;
            }
            let m = build_matching(&zeros, &boundary_only, &metric, &env, 5.0).unwrap();
            assert_eq!(m.pairs.len(), brute);
            for p in &m.pairs {
                assert!(p.displacement.norm() <= env.value_at(sub.points[p.lattice].position));
                assert!(p.rho_cost <= 5.0);
            }
        }
    }

    #[test]
    fn min_cost_identity_and_optimality() {
        let lattice = LatticeWindow::new(4.0, 1.0);
        let exact = lattice.positions();
        let m = min_cost_matching(&exact, &lattice);
        assert_eq!(m.pairs.len(), exact.len());
        assert!(m.pairs.iter().all(|p| p.displacement.norm() == 0.0));
        let mut rng = crate::rng::rng_for(24);
        let jittered: Vec<_> = exact.iter().map(|&z| z + c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let m = min_cost_matching(&jittered, &lattice);
        let total: f64 = m.pairs.iter().map(|p| p.displacement.norm_sqr()).sum();
        let identity: f64 = jittered.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum();
        assert!(total <= identity + 1e-12);
    }

    #[test]
    fn lattice_window_geometry() {
        let w = LatticeWindow::new(8.0 * lattice_spacing(), 3.0 * lattice_spacing());
        assert_eq!(w.points.len(), 17 * 17);
        assert_eq!(w.interior_count(), 11 * 11);
        let s = lattice_spacing();
        assert!((s * s - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn verifier_on_a_zero_free_region() {
        let (metric, _) = toy_metric(1.0, 6.0);
        let kernel = MollifierKernel::new(1.0, 0.1).unwrap();
        let shape = *metric.shape();
        let v = Verifier::new(&metric, &[], &[], &kernel);
        let set = CellSet::disk(&shape, c(0.0, 0.0), 0.5);
        let report = v.verify(&set);
        assert!((report.mass.inner_integral + set.area(&shape)).abs() < 1e-9);
        assert!(report.mass.inner_margin() > 0.0);
        // with no zeros at all, the mass side cannot balance
        assert!(report.mass.outer_margin() < 0.0);
        // no lattice points and no zeros: the area-side split checks must fail
        assert!(!report.hall.passes());
        assert!(report.hall.failures().contains(&"area_lattice_plus1"));
        let empty = v.verify(&CellSet::for_shape(&shape));
        assert!(empty.passes());
    }

    #[test]
    fn test_sets_are_nonempty_and_varied() {
        let shape = GridShape::centered(6.0, 0.1);
        let mut rng = crate::rng::rng_for(25);
        let mut kinds = std::collections::HashSet::new();
        for _ in 0..40 {
            let (kind, set) = sample_test_set(&shape, 3.0, &mut rng);
            assert!(!set.is_empty());
            kinds.insert(kind);
        }
        assert_eq!(kinds.len(), 4);
    }
}
