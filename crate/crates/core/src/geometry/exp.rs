//! The exponential map by RK4 integration of the geodesic equation, and its
//! local inverse.

#[allow(unused_imports)]
use num_traits::Float;

use super::sampler::{contract, MetricSampler};
use super::{add, axpy, coord_norm, sub, Point};

/// RK4 steps for a geodesic of coordinate length up to `len`: about four per
/// grid cell, at least four.
pub fn steps_for(sampler: &MetricSampler, len: f64) -> usize {
    let h = sampler.grid().min_spacing();
    ((4.0 * len / h).ceil() as usize).max(4)
}

fn accel(sampler: &MetricSampler, x: &Point, v: &Point) -> Point {
    let c = contract(&sampler.christoffel(x), v, v);
    [-c[0], -c[1], -c[2], -c[3]]
}

/// Endpoint and final velocity of the geodesic `γ(0) = p`, `γ'(0) = v` at
/// time one, integrated with `steps` RK4 steps.
pub fn geodesic_flow(sampler: &MetricSampler, p: &Point, v: &Point, steps: usize) -> (Point, Point) {
    let dt = 1.0 / steps as f64;
    let (mut x, mut u) = (*p, *v);
    for _ in 0..steps {
        let k1x = u;
        let k1v = accel(sampler, &x, &u);
        let x2 = axpy(&x, 0.5 * dt, &k1x);
        let u2 = axpy(&u, 0.5 * dt, &k1v);
        let k2v = accel(sampler, &x2, &u2);
        let x3 = axpy(&x, 0.5 * dt, &u2);
        let u3 = axpy(&u, 0.5 * dt, &k2v);
        let k3v = accel(sampler, &x3, &u3);
        let x4 = axpy(&x, dt, &u3);
        let u4 = axpy(&u, dt, &k3v);
        let k4v = accel(sampler, &x4, &u4);
        for a in 0..4 {
            x[a] += dt / 6.0 * (k1x[a] + 2.0 * u2[a] + 2.0 * u3[a] + u4[a]);
            u[a] += dt / 6.0 * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a]);
        }
    }
    (x, u)
}

/// `exp_p(v)` with a fixed number of steps, `None` if the integration blew up.
pub fn exp_fixed(sampler: &MetricSampler, p: &Point, v: &Point, steps: usize) -> Option<Point> {
    let (x, _) = geodesic_flow(sampler, p, v, steps);
    x.iter().all(|c| c.is_finite()).then_some(x)
}

/// `exp_p(v)` in the universal cover. A non-finite result is retried with
/// step sizes halved up to four times.
pub fn exp_map(sampler: &MetricSampler, p: &Point, v: &Point) -> Option<Point> {
    let mut steps = steps_for(sampler, coord_norm(v));
    for _ in 0..5 {
        if let Some(x) = exp_fixed(sampler, p, v, steps) {
            return Some(x);
        }
        steps *= 2;
    }
    None
}

/// `log_p(q)`: the initial velocity of the short geodesic from `p` to the
/// nearest lift of `q`, by fixed-point correction of the endpoint residual.
///
/// Converges when `|Γ|·|q − p|` is small, which holds well inside the
/// injectivity radius of the near-flat metrics the lab works with.
pub fn log_map(sampler: &MetricSampler, p: &Point, q: &Point) -> Option<Point> {
    let delta = sampler.grid().min_image(*p, *q);
    log_lifted(sampler, p, &add(p, &delta))
}

/// `log_p(q)` for a lift `q` already chosen in the cover.
pub fn log_lifted(sampler: &MetricSampler, p: &Point, q: &Point) -> Option<Point> {
    let delta = sub(q, p);
    let scale = coord_norm(&delta);
    if scale == 0.0 {
        return Some([0.0; 4]);
    }
    let steps = steps_for(sampler, 1.5 * scale);
    let c = contract(&sampler.christoffel(p), &delta, &delta);
    let mut v = axpy(&delta, 0.5, &c);
    for _ in 0..60 {
        let x = exp_fixed(sampler, p, &v, steps)?;
        let e = sub(q, &x);
        v = add(&v, &e);
        if coord_norm(&e) <= 1e-14 * (1.0 + scale) {
            return Some(v);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::metric::MetricField;

    #[test]
    fn flat_exp_is_translation() {
        let s = MetricSampler::new(&MetricField::flat(&TorusGrid::unit(8).unwrap()));
        let p = [0.1, 0.2, 0.3, 0.4];
        let v = [0.3, -0.2, 0.0, 0.7];
        let x = exp_map(&s, &p, &v).unwrap();
        for a in 0..4 {
            assert!((x[a] - p[a] - v[a]).abs() < 1e-14);
        }
        let w = log_map(&s, &p, &[0.95, 0.2, 0.3, 0.4]).unwrap();
        assert!((w[0] + 0.15).abs() < 1e-14);
    }

    #[test]
    fn log_inverts_exp_on_curved_metric() {
        let grid = TorusGrid::unit(12).unwrap();
        let s = MetricSampler::new(&MetricField::band_limited(&grid, 0.05, 1, 7).unwrap());
        let p = [0.31, 0.52, 0.13, 0.77];
        let v = [0.12, -0.05, 0.08, 0.02];
        let q = exp_map(&s, &p, &v).unwrap();
        let w = log_lifted(&s, &p, &q).unwrap();
        // exp and log use different step counts; the gap is integration error.
        for a in 0..4 {
            assert!((w[a] - v[a]).abs() < 1e-5, "{w:?} {v:?}");
        }
        let steps = steps_for(&s, 1.5 * coord_norm(&sub(&q, &p)));
        let back = exp_fixed(&s, &p, &w, steps).unwrap();
        assert!(coord_norm(&sub(&back, &q)) < 1e-13);
        // geodesic speed is conserved
        let (x, u) = geodesic_flow(&s, &p, &v, 40);
        let n0 = s.norm(&p, &v);
        let n1 = s.norm(&x, &u);
        assert!((n0 - n1).abs() < 1e-3 * n0);
    }
}
