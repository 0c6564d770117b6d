//! Geodesic ball volumes, diameters and the non-collapsing ratio.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::distance::{all_pairs_distances, DistanceConfig};
use super::exp::{exp_fixed, steps_for};
use super::quadrature::{gauss_interval, sphere3};
use super::sampler::MetricSampler;
use super::{axpy, scale, sub, Point};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, det4, gram_schmidt, sym_eigenvalues};
use crate::metric::MetricField;

/// Volume of the Euclidean unit 4-ball.
pub const OMEGA_4: f64 = PI * PI / 2.0;

/// Quadrature orders of [`ball_volume`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallQuadrature {
    pub radial: usize,
    pub sphere: usize,
}

impl Default for BallQuadrature {
    fn default() -> Self {
        Self { radial: 3, sphere: 3 }
    }
}

/// `Vol(B(center, r))` as the integral of the Jacobian of `exp_center` over
/// the Euclidean `r`-ball of the tangent space, in polar coordinates.
///
/// Inside the injectivity radius this is exactly the ball volume.
pub fn ball_volume(metric: &MetricField, center: &Point, r: f64, q: BallQuadrature) -> Result<f64> {
    let sampler = MetricSampler::new(metric);
    ball_volume_with(&sampler, center, r, q)
}

pub fn ball_volume_with(sampler: &MetricSampler, center: &Point, r: f64, q: BallQuadrature) -> Result<f64> {
    let half = 0.5 * sampler.grid().periods().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(r > 0.0 && r < half) {
        return Err(Error::InvalidArgument(format!(
            "ball radius {r} must lie in (0, {half})"
        )));
    }
    let g = sampler.metric(center);
    let e = gram_schmidt(&g, &[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
    let lam = sym_eigenvalues(&g)[0].max(1e-12);
    let steps = steps_for(sampler, 1.5 * r / lam.sqrt());
    let map = |w: &[f64; 4]| -> Point {
        let mut v = [0.0; 4];
        for (a, ea) in e.iter().enumerate() {
            v = axpy(&v, w[a], ea);
        }
        exp_fixed(sampler, center, &v, steps).unwrap_or([f64::NAN; 4])
    };
    let step = 1e-4 * r;
    let nodes: Vec<([f64; 4], f64)> = gauss_interval(q.radial, 0.0, r)
        .into_iter()
        .flat_map(|(rho, wr)| {
            sphere3(q.sphere)
                .into_iter()
                .map(move |(d, wd)| (scale(&d, rho), wr * wd * rho * rho * rho))
        })
        .collect();
    let vals: Vec<f64> = crate::par::map_collect(nodes.len(), |i| {
        let (w, wt) = nodes[i];
        let mut cols = [[0.0; 4]; 4];
        for (a, c) in cols.iter_mut().enumerate() {
            let (mut wp, mut wm) = (w, w);
            wp[a] += step;
            wm[a] -= step;
            *c = scale(&sub(&map(&wp), &map(&wm)), 0.5 / step);
        }
        let gx = sampler.metric(&map(&w));
        let mut gram = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                gram[a][b] = bilinear(&gx, &cols[a], &cols[b]);
            }
        }
        wt * det4(&gram).max(0.0).sqrt()
    });
    let v: f64 = vals.iter().sum();
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("exponential map failed in ball at {center:?}")));
    }
    Ok(v)
}

/// Largest pairwise distance over a sample set.
pub fn diameter(metric: &MetricField, points: &[Point]) -> f64 {
    all_pairs_distances(metric, points, &DistanceConfig::default()).max()
}

/// `min over centres and radii of Vol(B(x, r)) / (δ ω₄ r⁴) − 1`.
pub fn noncollapsing_check(metric: &MetricField, delta: f64, centers: &[Point], radii: &[f64]) -> Result<f64> {
    let sampler = MetricSampler::new(metric);
    let mut worst = f64::INFINITY;
    for c in centers {
        for &r in radii {
            let v = ball_volume_with(&sampler, c, r, BallQuadrature::default())?;
            worst = worst.min(v / (delta * OMEGA_4 * r.powi(4)) - 1.0);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn flat_ball_is_euclidean() {
        let grid = TorusGrid::unit(16).unwrap();
        let m = MetricField::flat(&grid);
        let v = ball_volume(&m, &[0.3, 0.1, 0.9, 0.5], 0.2, BallQuadrature::default()).unwrap();
        let exact = OMEGA_4 * 0.2f64.powi(4);
        assert!((v / exact - 1.0).abs() < 1e-8, "{v} vs {exact}");
        assert!(ball_volume(&m, &[0.0; 4], 0.6, BallQuadrature::default()).is_err());
    }

    #[test]
    fn scaled_ball_volume() {
        // B_{c²g}(x, c r) is B_g(x, r), with volume multiplied by c⁴.
        let grid = TorusGrid::unit(12).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 5).unwrap();
        let c = 1.2;
        let mc = m.scaled(c * c).unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];
        let v = ball_volume(&m, &x, 0.15, BallQuadrature::default()).unwrap();
        let vc = ball_volume(&mc, &x, 0.15 * c, BallQuadrature::default()).unwrap();
        assert!((vc / (v * c.powi(4)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_torus_diameter() {
        let grid = TorusGrid::unit(12).unwrap();
        let m = MetricField::flat(&grid);
        let pts = [[0.0; 4], [0.5; 4], [0.5, 0.0, 0.0, 0.0]];
        assert!((diameter(&m, &pts) - 1.0).abs() < 1e-9);
    }
}
