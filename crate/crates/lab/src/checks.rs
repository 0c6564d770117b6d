//! Inequality checks that compare distances, lengths and vector norms across
//! the sampled states of a flow.

use l2flow_core::flow::FlowTrace;
use l2flow_core::geometry::{
    all_pairs_distances, evolution::velocity_norms, Curve, DistanceConfig, MetricSampler, Point,
};
use l2flow_core::curvature::rm_full;
use l2flow_core::{CurvatureBundle, Field, MetricField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest violation of the pair symmetries and the first Bianchi identity
/// of `R_ijkl`, relative to the largest component.
pub fn riemann_symmetry_violation(metric: &MetricField) -> l2flow_core::Result<f64> {
    let b = CurvatureBundle::build(metric, 0)?;
    let mut scale: f64 = 0.0;
    let mut v: f64 = 0.0;
    for idx in 0..metric.grid().len() {
        let r = rm_full(&b.rm_at(idx));
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let x = r[i][j][k][l];
                        scale = scale.max(x.abs());
                        v = v
                            .max((x + r[j][i][k][l]).abs())
                            .max((x + r[i][j][l][k]).abs())
                            .max((x - r[k][l][i][j]).abs())
                            .max((x + r[j][k][i][l] + r[k][i][j][l]).abs());
                    }
                }
            }
        }
    }
    Ok(if scale > 0.0 { v / scale } else { v })
}

/// Sixteen quasi-uniform points `o + ½ b ⊙ L`, `b ∈ {0,1}⁴`, with a seeded
/// offset `o`. Opposite corners realize the flat diameter.
pub fn sample_points(grid: &TorusGrid, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.periods();
    let o: [f64; 4] = core::array::from_fn(|a| rng.random::<f64>() * 0.5 * l[a]);
    (0..16)
        .map(|b| core::array::from_fn(|a| o[a] + if b >> a & 1 == 1 { 0.5 * l[a] } else { 0.0 }))
        .collect()
}

/// Pairwise distances of the sample points at every sampled state.
#[derive(Clone, Debug)]
pub struct DistanceHistory {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub d: Vec<Vec<Vec<f64>>>,
}

impl DistanceHistory {
    pub fn compute(trace: &FlowTrace, points: &[Point], cfg: &DistanceConfig) -> Self {
        let d = trace
            .states
            .iter()
            .map(|s| all_pairs_distances(&s.metric, points, cfg).d)
            .collect();
        Self {
            times: trace.sample_times(),
            points: points.to_vec(),
            d,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

/// `½ max |d_a(x, y) − d_b(x, y)|` over sampled pairs: half the distortion of
/// the identity correspondence, an upper bound for the Gromov–Hausdorff
/// distance.
pub fn gh_upper_bound(da: &[Vec<f64>], db: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (ra, rb) in da.iter().zip(db) {
        for (a, b) in ra.iter().zip(rb) {
            m = m.max((a - b).abs());
        }
    }
    0.5 * m
}

/// [`gh_upper_bound`] of two metrics on the same grid.
pub fn gh_upper_bound_metrics(a: &MetricField, b: &MetricField, points: &[Point], cfg: &DistanceConfig) -> f64 {
    gh_upper_bound(&all_pairs_distances(a, points, cfg).d, &all_pairs_distances(b, points, cfg).d)
}

/// Centered three-record moving average.
pub fn smooth3(v: &[f64]) -> Vec<f64> {
    if v.len() < 3 {
        return v.to_vec();
    }
    v.windows(3).map(|w| (w[0] + w[1] + w[2]) / 3.0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GhTrend {
    pub times: Vec<f64>,
    pub bound: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Largest decrease of the smoothed sequence; nonpositive when monotone.
    pub max_decrease: f64,
}

pub fn gh_trend(h: &DistanceHistory) -> GhTrend {
    let bound: Vec<f64> = h.d.iter().map(|d| gh_upper_bound(&h.d[0], d)).collect();
    let smoothed = smooth3(&bound);
    let max_decrease = smoothed
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::NEG_INFINITY, f64::max);
    GhTrend {
        times: h.times.clone(),
        bound,
        smoothed,
        max_decrease,
    }
}

/// Smallest `(a, b) ≥ 0`, in the sense of minimizing `a U + b W`, with
/// `|Δd| ≤ a (t₂^{1/8} − t₁^{1/8})^{1/2} + b (t₂^{1/24} − t₁^{1/24})` over all
/// sampled time pairs and point pairs; `U` and `W` are the largest values of
/// the two shape functions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderFit {
    pub a: f64,
    pub b: f64,
    pub max_delta: f64,
    /// `(t₁, t₂, i, j, Δd)` of the largest `Δd`.
    pub worst: Option<(f64, f64, usize, usize, f64)>,
    pub constraints: usize,
}

impl HolderFit {
    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HolderError {
    #[error("need at least 10 sampled times, got {0}")]
    TooFewTimes(usize),
    #[error("need at least 5 point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("sample times are not strictly increasing and nonnegative")]
    DegenerateTimes,
}

pub fn distance_holder_check(h: &DistanceHistory) -> Result<HolderFit, HolderError> {
    let t = &h.times;
    if t.len() < 10 {
        return Err(HolderError::TooFewTimes(t.len()));
    }
    let pairs: Vec<(usize, usize)> = h.pairs().collect();
    if pairs.len() < 5 {
        return Err(HolderError::TooFewPairs(pairs.len()));
    }
    if t[0] < 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(HolderError::DegenerateTimes);
    }
    // (P, Q, Δd) per constraint.
    let mut rows = Vec::new();
    let mut worst: Option<(f64, f64, usize, usize, f64)> = None;
    for k in 0..t.len() {
        for l in k + 1..t.len() {
            let p = (t[l].powf(0.125) - t[k].powf(0.125)).sqrt();
            let q = t[l].powf(1.0 / 24.0) - t[k].powf(1.0 / 24.0);
            for &(i, j) in &pairs {
                let dd = (h.d[l][i][j] - h.d[k][i][j]).abs();
                rows.push((p, q, dd));
                if worst.map_or(true, |w| dd > w.4) {
                    worst = Some((t[k], t[l], i, j, dd));
                }
            }
        }
    }
    let max_delta = worst.map_or(0.0, |w| w.4);
    let u = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let w = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let (a, b) = minimize_cover(&rows, u, w);
    Ok(HolderFit {
        a,
        b,
        max_delta,
        worst,
        constraints: rows.len(),
    })
}

/// Minimizes `a U + b W` subject to `a P + b Q ≥ Δ`, `a, b ≥ 0`. For fixed `a`
/// the best `b` is `max (Δ − a P)₊ / Q`, a convex function of `a`, so a
/// golden-section search on `a` finds the optimum.
fn minimize_cover(rows: &[(f64, f64, f64)], u: f64, w: f64) -> (f64, f64) {
    if rows.iter().all(|r| r.2 == 0.0) {
        return (0.0, 0.0);
    }
    let b_of = |a: f64| -> f64 {
        rows.iter()
            .map(|&(p, q, d)| {
                let need = d - a * p;
                if need <= 0.0 {
                    0.0
                } else if q > 0.0 {
                    need / q
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    };
    let a_max = rows
        .iter()
        .filter(|r| r.2 > 0.0)
        .map(|&(p, _, d)| if p > 0.0 { d / p } else { f64::INFINITY })
        .fold(0.0, f64::max);
    if !a_max.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let cost = |a: f64| a * u + b_of(a) * w;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, a_max);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
        if hi - lo <= 1e-14 * a_max {
            break;
        }
    }
    let candidates = [0.0, lo, hi, a_max];
    let a = candidates
        .iter()
        .copied()
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .expect("nonempty");
    (a, b_of(a))
}

/// Pointwise `|g'|_g` and `|∇g'|_g` of one state as a two-component field.
fn norm_field(metric: &MetricField, velocity: &Field) -> Field {
    let n = velocity_norms(metric, velocity);
    let mut data = Vec::with_capacity(2 * n.len());
    for (a, b) in n {
        data.push(a);
        data.push(b);
    }
    Field::from_data(metric.grid(), 2, data).expect("matching length")
}

fn interpolate2(sampler: &MetricSampler, f: &Field, x: &Point) -> [f64; 2] {
    let mut out = [0.0; 2];
    MetricSampler::interpolate_into(f, &sampler.stencil(x), &mut out);
    out
}

/// One inequality evaluated between consecutive states or time pairs.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityRow {
    pub t1: f64,
    pub t2: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AppendixReport {
    /// `|ΔL/Δt|` against the average of `∫_γ |g'| dσ` at the two states.
    pub ap1: Vec<InequalityRow>,
    /// `max |log(|v|²_{t₂}/|v|²_{t₁})|` against `∫ ‖g'‖_∞ dt`.
    pub ap1a: Vec<InequalityRow>,
    /// Smallest `C` making the acceleration-derivative bound hold.
    pub ap2_c_fit: f64,
}

impl AppendixReport {
    /// Worst `lhs / rhs`; zero when every left side vanishes.
    pub fn worst_ratio(rows: &[InequalityRow]) -> f64 {
        rows.iter()
            .map(|r| {
                if r.lhs == 0.0 {
                    0.0
                } else if r.rhs > 0.0 {
                    r.lhs / r.rhs
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Evaluates the three appendix estimates along the trace for the frozen
/// curve `curve` and coordinate probe vectors at every grid point.
pub fn appendix_estimate_checks(trace: &FlowTrace, curve: &Curve) -> AppendixReport {
    let states = &trace.states;
    let samplers: Vec<MetricSampler> = states.iter().map(|s| MetricSampler::new(&s.metric)).collect();
    let norms: Vec<Field> = states.iter().map(|s| norm_field(&s.metric, &s.velocity)).collect();
    let sup_v: Vec<f64> = norms
        .iter()
        .map(|f| f.data().iter().step_by(2).fold(0.0, |m: f64, v| m.max(*v)))
        .collect();

    // Length and ∫_γ |g'| dσ per state, midpoint rule on the polyline.
    let per_state: Vec<(f64, f64)> = (0..states.len())
        .map(|k| {
            let s = &samplers[k];
            let lens = curve.segment_lengths(s);
            let mut integral = 0.0;
            for (i, w) in curve.points().windows(2).enumerate() {
                let mid = [
                    0.5 * (w[0][0] + w[1][0]),
                    0.5 * (w[0][1] + w[1][1]),
                    0.5 * (w[0][2] + w[1][2]),
                    0.5 * (w[0][3] + w[1][3]),
                ];
                integral += interpolate2(s, &norms[k], &mid)[0] * lens[i];
            }
            (lens.iter().sum(), integral)
        })
        .collect();
    let ap1 = (1..states.len())
        .map(|k| {
            let dt = states[k].t - states[k - 1].t;
            InequalityRow {
                t1: states[k - 1].t,
                t2: states[k].t,
                lhs: ((per_state[k].0 - per_state[k - 1].0) / dt).abs(),
                rhs: 0.5 * (per_state[k].1 + per_state[k - 1].1),
            }
        })
        .collect();

    // Coordinate probes at every grid point, all time pairs.
    let grid = trace.grid();
    let mut ap1a = Vec::new();
    let mut cumulative = vec![0.0; states.len()];
    for k in 1..states.len() {
        cumulative[k] = cumulative[k - 1] + 0.5 * (states[k].t - states[k - 1].t) * (sup_v[k] + sup_v[k - 1]);
    }
    for k in 0..states.len() {
        for l in k + 1..states.len() {
            let (mk, ml) = (&states[k].metric, &states[l].metric);
            let mut lhs: f64 = 0.0;
            for idx in 0..grid.len() {
                let (gk, gl) = (mk.at(idx), ml.at(idx));
                for a in 0..4 {
                    let d = l2flow_core::linalg::SYM_INDEX[a][a];
                    lhs = lhs.max((gl.0[d] / gk.0[d]).ln().abs());
                }
            }
            ap1a.push(InequalityRow {
                t1: states[k].t,
                t2: states[l].t,
                lhs,
                rhs: cumulative[l] - cumulative[k],
            });
        }
    }

    // ap:2 along the frozen curve: nodes with nonzero acceleration only.
    let mut c_fit: f64 = 0.0;
    let accel: Vec<Vec<f64>> = samplers.iter().map(|s| curve.accelerations(s)).collect();
    let speeds: Vec<Vec<f64>> = samplers.iter().map(|s| curve.speeds(s)).collect();
    for k in 1..states.len() {
        let dt = states[k].t - states[k - 1].t;
        for i in 1..curve.len().saturating_sub(1) {
            let (a0, a1) = (accel[k - 1][i - 1], accel[k][i - 1]);
            let lhs = ((a1 * a1 - a0 * a0) / dt).abs();
            let x = curve.points()[i];
            let n0 = interpolate2(&samplers[k - 1], &norms[k - 1], &x);
            let n1 = interpolate2(&samplers[k], &norms[k], &x);
            let acc = 0.5 * (a0 + a1);
            let speed = 0.5 * (speeds[k - 1][i] + speeds[k][i]);
            let first = 0.5 * (n0[0] + n1[0]) * acc * acc;
            let denom = speed * speed * acc * 0.5 * (n0[1] + n1[1]);
            if denom > 1e-300 && lhs > first {
                c_fit = c_fit.max((lhs - first) / denom);
            }
        }
    }
    AppendixReport {
        ap1,
        ap1a,
        ap2_c_fit: c_fit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_points_are_seeded_and_spread() {
        let grid = TorusGrid::unit(8).unwrap();
        let a = sample_points(&grid, 3);
        assert_eq!(a, sample_points(&grid, 3));
        assert_ne!(a, sample_points(&grid, 4));
        assert_eq!(a.len(), 16);
        let d = grid.min_image(a[0], a[15]);
        for c in d {
            assert!((c.abs() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gh_bound_is_symmetric_and_zero_on_equal_input() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.3], vec![1.3, 0.0]];
        assert_eq!(gh_upper_bound(&a, &a), 0.0);
        assert_eq!(gh_upper_bound(&a, &b), gh_upper_bound(&b, &a));
        assert!((gh_upper_bound(&a, &b) - 0.15).abs() < 1e-15);
    }

    fn history(times: Vec<f64>, f: impl Fn(f64, usize, usize) -> f64) -> DistanceHistory {
        let n = 4;
        DistanceHistory {
            d: times
                .iter()
                .map(|&t| (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { f(t, i.min(j), i.max(j)) }).collect()).collect())
                .collect(),
            times,
            points: vec![[0.0; 4]; n],
        }
    }

    #[test]
    fn holder_fit_recovers_shapes() {
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 1e-3).collect();
        let flat = distance_holder_check(&history(times.clone(), |_, _, _| 1.0)).unwrap();
        assert_eq!((flat.a, flat.b), (0.0, 0.0));
        // d = 1 + 0.3 t^{1/24}: the b-shape alone covers it exactly.
        let h = history(times.clone(), |t, i, j| 1.0 + 0.3 * t.powf(1.0 / 24.0) * (1 + i + j) as f64 / 6.0);
        let fit = distance_holder_check(&h).unwrap();
        assert!(fit.is_finite());
        for k in 0..12 {
            for l in k + 1..12 {
                let p = (times[l].powf(0.125) - times[k].powf(0.125)).sqrt();
                let q = times[l].powf(1.0 / 24.0) - times[k].powf(1.0 / 24.0);
                for (i, j) in h.pairs() {
                    let dd = (h.d[l][i][j] - h.d[k][i][j]).abs();
                    assert!(dd <= fit.a * p + fit.b * q + 1e-12);
                }
            }
        }
        assert!(fit.b <= 0.3 + 1e-9);
        assert_eq!(
            distance_holder_check(&history(times[..5].to_vec(), |_, _, _| 1.0)).unwrap_err(),
            HolderError::TooFewTimes(5)
        );
        let mut bad = times.clone();
        bad[3] = bad[2];
        assert_eq!(
            distance_holder_check(&history(bad, |_, _, _| 1.0)).unwrap_err(),
            HolderError::DegenerateTimes
        );
    }

    #[test]
    fn smoothing_and_trend() {
        assert_eq!(smooth3(&[0.0, 3.0, 0.0, 3.0]), vec![1.0, 2.0]);
        assert_eq!(smooth3(&[1.0, 2.0]), vec![1.0, 2.0]);
    }
}
