//! β-quasi-geodesic families along a flow: minimizing geodesics frozen on
//! intervals of length `S`, with `S` chosen from the measured stiffness of the
//! flow so that length, speed and acceleration stay controlled.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::curve::Curve;
use super::distance::{DistanceConfig, GeodesicSolver};
use super::evolution::velocity_sup_norms;
use super::{coord_norm, Point};
use crate::error::{Error, Result};
use crate::flow::{time_reversed_view, FlowTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Built forward on the time-reversed trace; times are reported in the
    /// original clock.
    Backward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasiGeodesicConfig {
    pub beta: f64,
    /// The dimensional constant of the acceleration estimate.
    pub c_n: f64,
    /// Number of equally spaced times at which the family is verified.
    pub check_times: usize,
    /// Interval count above which `S` is rejected as an underflow.
    pub max_segments: usize,
    /// Time window `[t₁, t₂]`; the whole trace by default.
    pub interval: Option<(f64, f64)>,
    pub distance: DistanceConfig,
}

impl Default for QuasiGeodesicConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            c_n: 1.0,
            check_times: 20,
            max_segments: 1_000_000,
            interval: None,
            distance: DistanceConfig::default(),
        }
    }
}

/// The geodesic frozen on one interval.
#[derive(Clone, Debug)]
pub struct Segment {
    pub j: usize,
    /// Time (original clock) at which the geodesic was chosen.
    pub t: f64,
    /// Constant-speed samples on `[0, 1]`.
    pub curve: Curve,
    /// `d(x, y, t_j)`, the length of the frozen geodesic when chosen.
    pub d: f64,
    pub certified: bool,
}

/// Verification of the family at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeCheck {
    pub t: f64,
    pub segment: usize,
    /// Length of the relaxed geodesic of `g(t)`.
    pub geodesic_length: f64,
    /// `d(x, y, t)`: the smaller of the relaxed geodesic length and
    /// `L(γ_t, t)`, both lengths of actual curves.
    pub distance: f64,
    /// `L(γ_t, t)`.
    pub length: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// `d(x, y, t_j)` of the active segment.
    pub d_j: f64,
    /// `d + β − L`.
    pub margin_length: f64,
    /// Distance of the speed range to the bounds `[d_j/(1+β), (1+β) d_j]`.
    pub margin_speed: f64,
    /// `β d_j² − max|∇_γ' γ'|`.
    pub margin_accel: f64,
}

#[derive(Clone, Debug)]
pub struct QuasiGeodesicFamily {
    pub x: Point,
    pub y: Point,
    pub beta: f64,
    pub direction: Direction,
    pub t1: f64,
    pub t2: f64,
    /// Interval length `S`.
    pub s: f64,
    /// `A = max ‖g'‖_∞ + max ‖∇g'‖_∞`.
    pub a: f64,
    pub sup_velocity: f64,
    pub sup_velocity_gradient: f64,
    /// `min_t d(x, y, t)` over the check times.
    pub d_bar: f64,
    /// Number of intervals `⌈(t₂ − t₁)/S⌉`; the last one is closed.
    pub interval_count: usize,
    /// Segments that were needed by the check times, by index.
    pub segments: Vec<Segment>,
    pub checks: Vec<TimeCheck>,
    /// `x = y`: constant curves, speed and acceleration checks skipped.
    pub degenerate: bool,
}

impl QuasiGeodesicFamily {
    /// Smallest margin over all checks; nonnegative iff every condition holds.
    pub fn min_margin(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.margin_length.min(c.margin_speed).min(c.margin_accel))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self) -> bool {
        self.min_margin() >= 0.0
    }
}

/// `(A, sup‖g'‖, sup‖∇g'‖)` over the trace states whose times touch `[t1, t2]`.
pub fn stiffness_constant(trace: &FlowTrace, t1: f64, t2: f64) -> (f64, f64, f64) {
    let states = &trace.states;
    let mut v: f64 = 0.0;
    let mut dv: f64 = 0.0;
    for (k, s) in states.iter().enumerate() {
        let next_in = states.get(k + 1).map_or(false, |n| n.t >= t1);
        let prev_in = k > 0 && states[k - 1].t <= t2;
        let inside = s.t >= t1 && s.t <= t2;
        if inside || (s.t < t1 && next_in) || (s.t > t2 && prev_in) {
            let (a, b) = velocity_sup_norms(&s.metric, &s.velocity);
            v = v.max(a);
            dv = dv.max(b);
        }
    }
    (v + dv, v, dv)
}

/// Largest `S` allowed by the three interval conditions of the existence
/// proof, clamped to `t₂ − t₁`:
/// `A S ≤ log (1+β)²`, `(e^{AS} − 1) e^{A(t₂−t₁)} d₁ ≤ β/2` and
/// `A S (1 + 4 C e^{2A(t₂−t₁)} d₁²) ≤ ½ min{β d̄², 1}`.
pub fn interval_length(a: f64, beta: f64, c_n: f64, span: f64, d1: f64, d_bar: f64) -> f64 {
    if a <= 0.0 {
        return span;
    }
    let s1 = 2.0 * (1.0 + beta).ln() / a;
    let growth = (a * span).exp();
    let s2 = if d1 > 0.0 {
        (beta / (2.0 * growth * d1)).ln_1p() / a
    } else {
        f64::INFINITY
    };
    let s3 = 0.5 * (beta * d_bar * d_bar).min(1.0) / (a * (1.0 + 4.0 * c_n * growth * growth * d1 * d1));
    s1.min(s2).min(s3).min(span)
}

/// Builds and verifies a β-quasi-forward (or backward) geodesic family
/// connecting `x` and `y` along the trace.
pub fn quasi_geodesic(
    trace: &FlowTrace,
    x: &Point,
    y: &Point,
    direction: Direction,
    config: &QuasiGeodesicConfig,
) -> Result<QuasiGeodesicFamily> {
    let beta = config.beta;
    let (t1, t2) = config.interval.unwrap_or((trace.t_start(), trace.t_end()));
    if !(t2 > t1) || t1 < trace.t_start() || t2 > trace.t_end() {
        return Err(Error::InvalidArgument(alloc::format!(
            "interval [{t1}, {t2}] is not inside the trace"
        )));
    }
    let (work, w1, w2) = match direction {
        Direction::Forward => (None, t1, t2),
        Direction::Backward => {
            let (a, b) = (trace.t_start(), trace.t_end());
            (Some(time_reversed_view(trace)), a + b - t2, a + b - t1)
        }
    };
    let work: &FlowTrace = work.as_ref().unwrap_or(trace);
    let to_original = |t: f64| match direction {
        Direction::Forward => t,
        Direction::Backward => trace.t_start() + trace.t_end() - t,
    };
    let (a, sup_v, sup_dv) = stiffness_constant(work, w1, w2);
    let degenerate = coord_norm(&trace.grid().min_image(*x, *y)) == 0.0;
    let n = config.check_times.max(2);
    let times: Vec<f64> = (0..n).map(|i| w1 + (w2 - w1) * i as f64 / (n - 1) as f64).collect();

    let mut relaxed = Vec::with_capacity(n);
    for &t in &times {
        let m = work.metric_at(t)?;
        let solver = GeodesicSolver::new(&m, config.distance.clone());
        let g = solver.geodesic(x, y);
        relaxed.push((m, g));
    }
    let d1 = relaxed[0].1.length;
    let d_bar = relaxed.iter().map(|(_, g)| g.length).fold(f64::INFINITY, f64::min);
    let span = w2 - w1;
    let s = if degenerate {
        span
    } else {
        interval_length(a, beta, config.c_n, span, d1, d_bar)
    };
    if !(s > 0.0) || !s.is_finite() || span / s > config.max_segments as f64 {
        return Err(Error::IntervalUnderflow { a });
    }
    let interval_count = ((span / s).ceil() as usize).max(1);

    let mut segments: BTreeMap<usize, Segment> = BTreeMap::new();
    let mut checks = Vec::with_capacity(n);
    for (i, &t) in times.iter().enumerate() {
        let j = (((t - w1) / s).floor() as usize).min(interval_count - 1);
        if !segments.contains_key(&j) {
            let tj = w1 + j as f64 * s;
            let seg = if tj == t {
                let g = &relaxed[i].1;
                Segment {
                    j,
                    t: to_original(tj),
                    curve: g.curve.clone(),
                    d: g.length,
                    certified: g.certified,
                }
            } else {
                let m = work.metric_at(tj)?;
                let g = GeodesicSolver::new(&m, config.distance.clone()).geodesic(x, y);
                Segment {
                    j,
                    t: to_original(tj),
                    curve: g.curve,
                    d: g.length,
                    certified: g.certified,
                }
            };
            segments.insert(j, seg);
        }
        let seg = &segments[&j];
        let (m, g) = &relaxed[i];
        let solver = GeodesicSolver::new(m, config.distance.clone());
        let sampler = solver.sampler();
        let length = seg.curve.length(sampler);
        let distance = g.length.min(length);
        let check = if degenerate {
            TimeCheck {
                t: to_original(t),
                segment: j,
                geodesic_length: 0.0,
                distance: 0.0,
                length,
                min_speed: 0.0,
                max_speed: 0.0,
                max_accel: 0.0,
                d_j: 0.0,
                margin_length: distance + beta - length,
                margin_speed: f64::INFINITY,
                margin_accel: f64::INFINITY,
            }
        } else {
            let speeds = seg.curve.speeds(sampler);
            let min_speed = speeds.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_speed = speeds.iter().cloned().fold(0.0, f64::max);
            let max_accel = seg.curve.accelerations(sampler).iter().cloned().fold(0.0, f64::max);
            let dj = seg.d;
            TimeCheck {
                t: to_original(t),
                segment: j,
                geodesic_length: g.length,
                distance,
                length,
                min_speed,
                max_speed,
                max_accel,
                d_j: dj,
                margin_length: distance + beta - length,
                margin_speed: (min_speed - dj / (1.0 + beta)).min((1.0 + beta) * dj - max_speed),
                margin_accel: beta * dj * dj - max_accel,
            }
        };
        checks.push(check);
    }
    if direction == Direction::Backward {
        checks.reverse();
    }
    Ok(QuasiGeodesicFamily {
        x: *x,
        y: *y,
        beta,
        direction,
        t1,
        t2,
        s,
        a,
        sup_velocity: sup_v,
        sup_velocity_gradient: sup_dv,
        d_bar,
        interval_count,
        segments: segments.into_values().collect(),
        checks,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowConfig, SampleSchedule};
    use crate::grid::TorusGrid;
    use crate::metric::MetricField;

    #[test]
    fn static_flow_uses_a_single_geodesic() {
        let grid = TorusGrid::unit(8).unwrap();
        let cfg = FlowConfig {
            derivative_monitors: false,
            ..FlowConfig::default()
        };
        let trace = run(MetricField::flat(&grid), 1e-3, &SampleSchedule::Uniform(2), &cfg).unwrap();
        let qc = QuasiGeodesicConfig {
            check_times: 4,
            ..QuasiGeodesicConfig::default()
        };
        let x = [0.1, 0.2, 0.3, 0.4];
        let y = [0.4, 0.2, 0.1, 0.6];
        for dir in [Direction::Forward, Direction::Backward] {
            let f = quasi_geodesic(&trace, &x, &y, dir, &qc).unwrap();
            assert_eq!(f.a, 0.0);
            assert_eq!(f.s, 1e-3);
            assert_eq!(f.segments.len(), 1);
            assert!(f.holds());
            let c = &f.checks[0];
            assert!((c.margin_length - 0.05).abs() < 1e-12);
        }
        let f = quasi_geodesic(&trace, &x, &x, Direction::Forward, &qc).unwrap();
        assert!(f.degenerate && f.holds());
    }

    #[test]
    fn interval_conditions() {
        assert_eq!(interval_length(0.0, 0.05, 1.0, 2.0, 1.0, 1.0), 2.0);
        let s = interval_length(10.0, 0.05, 1.0, 1e-3, 0.5, 0.5);
        let a = 10.0;
        let g = (a * 1e-3f64).exp();
        assert!(a * s <= 2.0 * 1.05f64.ln() + 1e-15);
        assert!(((a * s).exp() - 1.0) * g * 0.5 <= 0.025 + 1e-15);
        assert!(a * s * (1.0 + 4.0 * g * g * 0.25) <= 0.5 * 0.05 * 0.25 + 1e-15);
    }
}
