//! Geodesic distance: shortest paths on a grid graph refined by relaxation of
//! the discrete geodesic equation.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;

use super::curve::Curve;
use super::sampler::{contract, MetricSampler};
use super::{add, coord_norm, sub, Point};
use crate::grid::{TorusGrid, DIM};
use crate::metric::MetricField;

/// Graph moves: the 8 axis steps and the 24 steps along two axes at once.
pub const MOVES: [[i64; DIM]; 32] = {
    let mut t = [[0i64; DIM]; 32];
    let mut n = 0;
    let mut a = 0;
    while a < DIM {
        t[n][a] = 1;
        t[n + 1][a] = -1;
        n += 2;
        a += 1;
    }
    let mut a = 0;
    while a < DIM {
        let mut b = a + 1;
        while b < DIM {
            let mut s = 0;
            while s < 4 {
                t[n][a] = if s & 1 == 0 { 1 } else { -1 };
                t[n][b] = if s & 2 == 0 { 1 } else { -1 };
                n += 1;
                s += 1;
            }
            b += 1;
        }
        a += 1;
    }
    t
};

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceConfig {
    /// Relaxation iterations before a curve is returned uncertified.
    pub max_iter: usize,
    /// Convergence threshold on the largest coordinate update.
    pub tol: f64,
    /// Curve samples per grid spacing of coordinate length.
    pub samples_per_cell: f64,
    pub min_samples: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-12,
            samples_per_cell: 2.0,
            min_samples: 8,
        }
    }
}

/// A relaxed geodesic and its provenance.
#[derive(Clone, Debug)]
pub struct Geodesic {
    /// Samples on `[0, 1]`, unwrapped from the lift of the start point.
    pub curve: Curve,
    pub length: f64,
    /// Length of the graph path the relaxation started from.
    pub graph_length: f64,
    /// Relaxation converged and improved on the graph path.
    pub certified: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Shortest-path tree of the grid graph from one node.
pub struct PathTree {
    source: usize,
    dist: Vec<f64>,
    pred: Vec<(u32, u8)>,
}

impl PathTree {
    pub fn distance_to(&self, node: usize) -> f64 {
        self.dist[node]
    }

    /// Moves from the source to `node`.
    fn moves_to(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = node;
        while cur != self.source {
            let (p, m) = self.pred[cur];
            out.push(m as usize);
            cur = p as usize;
        }
        out.reverse();
        out
    }
}

/// Dijkstra on the 32-move graph; edge weights use the average of the metric
/// at the two end nodes. Stops early once `target` is settled.
pub fn shortest_paths(metric: &MetricField, source: usize, target: Option<usize>) -> PathTree {
    let grid = metric.grid();
    let h = grid.spacing();
    let data = metric.field().data();
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![(u32::MAX, 0u8); n];
    let mut done = vec![false; n];
    let quad_at = |i: usize, m: &[i64; DIM]| -> f64 {
        let g = &data[i * 10..i * 10 + 10];
        let v = [m[0] as f64 * h[0], m[1] as f64 * h[1], m[2] as f64 * h[2], m[3] as f64 * h[3]];
        let mut q = 0.0;
        for (k, &(a, b)) in crate::linalg::SYM_PAIRS.iter().enumerate() {
            let w = if a == b { 1.0 } else { 2.0 };
            q += w * g[k] * v[a] * v[b];
        }
        q
    };
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, source));
    while let Some(Item(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if Some(u) == target {
            break;
        }
        let c = grid.coords(u);
        for (mi, m) in MOVES.iter().enumerate() {
            let v = grid.index_wrapped([
                c[0] as i64 + m[0],
                c[1] as i64 + m[1],
                c[2] as i64 + m[2],
                c[3] as i64 + m[3],
            ]);
            if done[v] {
                continue;
            }
            let w = (0.5 * (quad_at(u, m) + quad_at(v, m))).max(0.0).sqrt();
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = (u as u32, mi as u8);
                heap.push(Item(nd, v));
            }
        }
    }
    PathTree { source, dist, pred }
}

/// Nearest grid node of a continuous point.
pub fn nearest_node(grid: &TorusGrid, x: &Point) -> usize {
    let h = grid.spacing();
    grid.index_wrapped([
        (x[0] / h[0]).round() as i64,
        (x[1] / h[1]).round() as i64,
        (x[2] / h[2]).round() as i64,
        (x[3] / h[3]).round() as i64,
    ])
}

/// Geodesic construction with a cached sampler.
pub struct GeodesicSolver<'a> {
    metric: &'a MetricField,
    sampler: MetricSampler,
    config: DistanceConfig,
    /// `sqrt(λ_max / λ_min)` of the metric over the grid: a lift of the end
    /// point whose coordinate length exceeds the shortest one by more than
    /// this factor cannot be closer.
    lift_ratio: f64,
}

impl<'a> GeodesicSolver<'a> {
    pub fn new(metric: &'a MetricField, config: DistanceConfig) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for idx in 0..metric.grid().len() {
            let e = crate::linalg::sym_eigenvalues(&metric.at(idx).to_full());
            lo = lo.min(e[0]);
            hi = hi.max(e[3]);
        }
        Self {
            metric,
            sampler: MetricSampler::new(metric),
            config,
            lift_ratio: (hi / lo).sqrt(),
        }
    }

    pub fn sampler(&self) -> &MetricSampler {
        &self.sampler
    }

    pub fn geodesic(&self, x: &Point, y: &Point) -> Geodesic {
        let grid = self.metric.grid();
        let (src, dst) = (nearest_node(grid, x), nearest_node(grid, y));
        let tree = shortest_paths(self.metric, src, Some(dst));
        self.geodesic_in_tree(&tree, x, y)
    }

    /// Geodesic from `x` (whose nearest node is the tree's source) to `y`.
    pub fn geodesic_in_tree(&self, tree: &PathTree, x: &Point, y: &Point) -> Geodesic {
        let grid = self.metric.grid();
        if coord_norm(&grid.min_image(*x, *y)) == 0.0 {
            return Geodesic {
                curve: Curve::constant(*x),
                length: 0.0,
                graph_length: 0.0,
                certified: true,
                iterations: 0,
            };
        }
        let h = grid.spacing();
        let dst = nearest_node(grid, y);
        let mut poly = vec![*x];
        let mut node = add(x, &grid.min_image(*x, grid.position(tree.source)));
        poly.push(node);
        for m in tree.moves_to(dst) {
            let mv = MOVES[m];
            node = [
                node[0] + mv[0] as f64 * h[0],
                node[1] + mv[1] as f64 * h[1],
                node[2] + mv[2] as f64 * h[2],
                node[3] + mv[3] as f64 * h[3],
            ];
            poly.push(node);
        }
        let end = add(&node, &grid.min_image(node, *y));
        poly.push(end);
        poly.dedup();
        let mut params = Vec::with_capacity(poly.len());
        let mut acc = 0.0;
        params.push(0.0);
        for w in poly.windows(2) {
            acc += coord_norm(&sub(&w[1], &w[0]));
            params.push(acc);
        }
        if poly.len() < 2 {
            poly.push(end);
            params.push(1.0);
        }
        let m = ((acc * self.config.samples_per_cell / grid.min_spacing()).ceil() as usize)
            .max(self.config.min_samples);
        let initial = Curve::new(poly, params)
            .expect("graph path has increasing arclength")
            .resampled(m);
        let initial = Curve::uniform(initial.points().to_vec()).expect("resampled curve");
        let graph_length = initial.length(&self.sampler);
        let mut best = self.relaxed_candidate(initial, graph_length);
        // The graph path fixes one homotopy class; near cut points another
        // lift of `y` can be shorter, so straight lines to every competitive
        // lift are relaxed as well.
        let v0 = grid.min_image(*x, *y);
        let l = grid.periods();
        let reach = coord_norm(&v0) * self.lift_ratio * (1.0 + 1e-9);
        for k in 0..81usize {
            let shift: [f64; 4] = core::array::from_fn(|a| ((k / 3usize.pow(a as u32)) % 3) as f64 - 1.0);
            let v: Point = core::array::from_fn(|a| v0[a] + shift[a] * l[a]);
            let len = coord_norm(&v);
            if len > reach {
                continue;
            }
            let samples = ((len * self.config.samples_per_cell / grid.min_spacing()).ceil() as usize)
                .max(self.config.min_samples);
            let line = (0..samples)
                .map(|i| {
                    let u = i as f64 / (samples - 1) as f64;
                    core::array::from_fn(|a| x[a] + u * v[a])
                })
                .collect();
            let line = Curve::uniform(line).expect("straight line");
            let start = line.length(&self.sampler);
            let cand = self.relaxed_candidate(line, start);
            if cand.length < best.length {
                best = Geodesic { graph_length, ..cand };
            }
        }
        best
    }

    /// Relaxes `initial`, falling back to it when relaxation makes it longer.
    fn relaxed_candidate(&self, initial: Curve, initial_length: f64) -> Geodesic {
        let (relaxed, converged, iterations) = self.relax(&initial);
        let length = relaxed.length(&self.sampler);
        if length <= initial_length {
            Geodesic {
                curve: relaxed,
                length,
                graph_length: initial_length,
                certified: converged,
                iterations,
            }
        } else {
            Geodesic {
                curve: initial,
                length: initial_length,
                graph_length: initial_length,
                certified: false,
                iterations,
            }
        }
    }

    /// Relaxes a uniformly parameterized curve with fixed end points.
    pub fn relax_curve(&self, initial: &Curve) -> (Curve, bool, usize) {
        self.relax(initial)
    }

    /// Picard iteration on `x_{k+1} − 2x_k + x_{k−1} + Γ(x_k)(v_k, v_k) = 0`
    /// with `v_k = (x_{k+1} − x_{k−1})/2`, each sweep a tridiagonal solve.
    fn relax(&self, initial: &Curve) -> (Curve, bool, usize) {
        let mut x: Vec<Point> = initial.points().to_vec();
        let n = x.len();
        if n < 3 {
            return (initial.clone(), true, 0);
        }
        let scale = coord_norm(&sub(&x[n - 1], &x[0])).max(1e-300);
        let mut omega = 1.0;
        let mut prev_update = f64::INFINITY;
        let mut rhs = vec![[0.0; 4]; n];
        for it in 0..self.config.max_iter {
            for k in 1..n - 1 {
                let v = [
                    0.5 * (x[k + 1][0] - x[k - 1][0]),
                    0.5 * (x[k + 1][1] - x[k - 1][1]),
                    0.5 * (x[k + 1][2] - x[k - 1][2]),
                    0.5 * (x[k + 1][3] - x[k - 1][3]),
                ];
                let c = contract(&self.sampler.christoffel(&x[k]), &v, &v);
                rhs[k] = [-c[0], -c[1], -c[2], -c[3]];
            }
            let new = solve_second_difference(&x[0], &x[n - 1], &rhs[1..n - 1]);
            let mut update: f64 = 0.0;
            for k in 1..n - 1 {
                for a in 0..4 {
                    let d = new[k - 1][a] - x[k][a];
                    update = update.max(d.abs());
                    x[k][a] += omega * d;
                }
            }
            if !update.is_finite() {
                return (initial.clone(), false, it + 1);
            }
            if update <= self.config.tol * scale.max(1.0) {
                return (Curve::uniform(x).expect("uniform parameters"), true, it + 1);
            }
            if update > prev_update && omega > 0.125 {
                omega *= 0.5;
            }
            prev_update = update;
        }
        (Curve::uniform(x).expect("uniform parameters"), false, self.config.max_iter)
    }
}

/// Solves `x_{k+1} − 2x_k + x_{k−1} = r_k` for the interior points with the
/// end points fixed (Thomas algorithm, one coordinate at a time).
fn solve_second_difference(x0: &Point, xn: &Point, r: &[Point]) -> Vec<Point> {
    let m = r.len();
    let mut out = vec![[0.0; 4]; m];
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    for a in 0..4 {
        for k in 0..m {
            let mut d = r[k][a];
            if k == 0 {
                d -= x0[a];
            }
            if k == m - 1 {
                d -= xn[a];
            }
            if k == 0 {
                cp[0] = 1.0 / -2.0;
                dp[0] = d / -2.0;
            } else {
                let den = -2.0 - cp[k - 1];
                cp[k] = 1.0 / den;
                dp[k] = (d - dp[k - 1]) / den;
            }
        }
        out[m - 1][a] = dp[m - 1];
        for k in (0..m - 1).rev() {
            out[k][a] = dp[k] - cp[k] * out[k + 1][a];
        }
    }
    out
}

/// `d_g(x, y)`.
pub fn distance(metric: &MetricField, x: &Point, y: &Point) -> f64 {
    geodesic(metric, x, y).length
}

/// Relaxed geodesic from `x` to `y` with default settings.
pub fn geodesic(metric: &MetricField, x: &Point, y: &Point) -> Geodesic {
    GeodesicSolver::new(metric, DistanceConfig::default()).geodesic(x, y)
}

/// Symmetric distance matrix of a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub points: Vec<Point>,
    pub d: Vec<Vec<f64>>,
    /// Every pairwise relaxation converged.
    pub certified: bool,
}

impl DistanceMatrix {
    pub fn max(&self) -> f64 {
        self.d.iter().flatten().cloned().fold(0.0, f64::max)
    }

    /// Largest violation of the triangle inequality over all triples.
    pub fn triangle_defect(&self) -> f64 {
        let n = self.d.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    worst = worst.max(self.d[i][j] - self.d[i][k] - self.d[k][j]);
                }
            }
        }
        worst
    }
}

/// All pairwise distances, one shortest-path tree per source. Each entry is
/// the length of a curve, hence an upper bound; a shortest-path closure over
/// the sample set then enforces the triangle inequality exactly.
pub fn all_pairs_distances(metric: &MetricField, points: &[Point], config: &DistanceConfig) -> DistanceMatrix {
    let solver = GeodesicSolver::new(metric, config.clone());
    let n = points.len();
    let rows: Vec<Vec<(f64, bool)>> = crate::par::map_collect(n, |i| {
        let tree = shortest_paths(metric, nearest_node(metric.grid(), &points[i]), None);
        (i + 1..n)
            .map(|j| {
                let g = solver.geodesic_in_tree(&tree, &points[i], &points[j]);
                (g.length, g.certified)
            })
            .collect()
    });
    let mut d = vec![vec![0.0; n]; n];
    let mut certified = true;
    for (i, row) in rows.iter().enumerate() {
        for (k, &(l, c)) in row.iter().enumerate() {
            let j = i + 1 + k;
            d[i][j] = l;
            d[j][i] = l;
            certified &= c;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    DistanceMatrix {
        points: points.to_vec(),
        d,
        certified,
    }
}
