//! Sampled curves in the universal cover of the torus.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::sampler::{contract, MetricSampler};
use super::{axpy, coord_norm, sub, Point};
use crate::error::{Error, Result};
use crate::linalg::quad;

/// Ordered samples `γ(s_k)` with strictly increasing parameters `s_k`.
///
/// Points are unwrapped, so consecutive samples are close in coordinates even
/// when the curve crosses the boundary of the fundamental domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    points: Vec<Point>,
    params: Vec<f64>,
}

impl Curve {
    pub fn new(points: Vec<Point>, params: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != params.len() {
            return Err(Error::InvalidArgument(
                "a curve needs at least two samples and one parameter per sample".into(),
            ));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("curve parameters must increase strictly".into()));
        }
        Ok(Self { points, params })
    }

    /// Samples parameterized uniformly on `[0, 1]`.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let m = points.len().saturating_sub(1).max(1) as f64;
        let params = (0..points.len()).map(|k| k as f64 / m).collect();
        Self::new(points, params)
    }

    /// The constant curve at `p` on `[0, 1]`.
    pub fn constant(p: Point) -> Self {
        Self {
            points: alloc::vec![p, p],
            params: alloc::vec![0.0, 1.0],
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> Point {
        self.points[0]
    }

    pub fn end(&self) -> Point {
        self.points[self.points.len() - 1]
    }

    pub fn param_range(&self) -> (f64, f64) {
        (self.params[0], self.params[self.params.len() - 1])
    }

    pub fn is_constant(&self) -> bool {
        self.points.windows(2).all(|w| w[0] == w[1])
    }

    /// Largest coordinate distance between consecutive samples.
    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| coord_norm(&sub(&w[1], &w[0])))
            .fold(0.0, f64::max)
    }

    /// Length of each chord, measured with the metric at its midpoint.
    pub fn segment_lengths(&self, sampler: &MetricSampler) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| {
                let d = sub(&w[1], &w[0]);
                let mid = axpy(&w[0], 0.5, &d);
                quad(&sampler.metric(&mid), &d).max(0.0).sqrt()
            })
            .collect()
    }

    pub fn length(&self, sampler: &MetricSampler) -> f64 {
        self.segment_lengths(sampler).iter().sum()
    }

    /// Same samples parameterized by arc length from zero.
    pub fn arclength_parametrized(&self, sampler: &MetricSampler) -> Result<Self> {
        let mut params = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        params.push(0.0);
        for l in self.segment_lengths(sampler) {
            acc += l;
            params.push(acc);
        }
        Self::new(self.points.clone(), params)
    }

    /// The curve traversed backwards on the same parameter interval.
    pub fn reversed(&self) -> Self {
        let (a, b) = self.param_range();
        let mut points = self.points.clone();
        points.reverse();
        let params = self.params.iter().rev().map(|s| a + b - s).collect();
        Self { points, params }
    }

    /// `γ'(s_k)` at every sample by second-order differences on the
    /// (possibly nonuniform) parameter grid.
    pub fn node_velocities(&self) -> Vec<Point> {
        let n = self.len();
        let (x, s) = (&self.points, &self.params);
        (0..n)
            .map(|k| {
                if k == 0 {
                    scale_diff(&x[1], &x[0], s[1] - s[0])
                } else if k == n - 1 {
                    scale_diff(&x[n - 1], &x[n - 2], s[n - 1] - s[n - 2])
                } else {
                    let (h1, h2) = (s[k] - s[k - 1], s[k + 1] - s[k]);
                    let mut v = [0.0; 4];
                    for a in 0..4 {
                        v[a] = (h1 * h1 * x[k + 1][a] - h2 * h2 * x[k - 1][a]
                            + (h2 * h2 - h1 * h1) * x[k][a])
                            / (h1 * h2 * (h1 + h2));
                    }
                    v
                }
            })
            .collect()
    }

    /// `|γ'(s_k)|_g` at every sample.
    pub fn speeds(&self, sampler: &MetricSampler) -> Vec<f64> {
        self.node_velocities()
            .iter()
            .zip(self.points.iter())
            .map(|(v, x)| sampler.norm(x, v))
            .collect()
    }

    /// `|∇_γ' γ'|_g` at interior samples.
    pub fn accelerations(&self, sampler: &MetricSampler) -> Vec<f64> {
        let n = self.len();
        let vel = self.node_velocities();
        let (x, s) = (&self.points, &self.params);
        (1..n.saturating_sub(1))
            .map(|k| {
                let (h1, h2) = (s[k] - s[k - 1], s[k + 1] - s[k]);
                let (g, gam) = sampler.metric_and_christoffel(&x[k]);
                let c = contract(&gam, &vel[k], &vel[k]);
                let mut acc = [0.0; 4];
                for a in 0..4 {
                    let second = 2.0
                        * ((x[k + 1][a] - x[k][a]) / h2 - (x[k][a] - x[k - 1][a]) / h1)
                        / (h1 + h2);
                    acc[a] = second + c[a];
                }
                quad(&g, &acc).max(0.0).sqrt()
            })
            .collect()
    }

    fn locate(&self, s: f64) -> usize {
        let p = &self.params;
        match p.binary_search_by(|v| v.partial_cmp(&s).unwrap_or(core::cmp::Ordering::Less)) {
            Ok(i) => i.min(p.len() - 2),
            Err(i) => i.clamp(1, p.len() - 1) - 1,
        }
    }

    /// Position and velocity of the cubic Hermite interpolant through the
    /// samples and their node velocities. Parameters outside the range are
    /// extrapolated from the end cubic.
    pub fn hermite(&self, s: f64, vel: &[Point]) -> (Point, Point) {
        let k = self.locate(s);
        let (s0, s1) = (self.params[k], self.params[k + 1]);
        let h = s1 - s0;
        let u = (s - s0) / h;
        let (u2, u3) = (u * u, u * u * u);
        let (h00, h10, h01, h11) = (2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2);
        let (d00, d10, d01, d11) = (6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u);
        let (p0, p1, m0, m1) = (&self.points[k], &self.points[k + 1], &vel[k], &vel[k + 1]);
        let mut x = [0.0; 4];
        let mut v = [0.0; 4];
        for a in 0..4 {
            x[a] = h00 * p0[a] + h10 * h * m0[a] + h01 * p1[a] + h11 * h * m1[a];
            v[a] = (d00 * p0[a] + d01 * p1[a]) / h + d10 * m0[a] + d11 * m1[a];
        }
        (x, v)
    }

    /// Position at parameter `s` by linear interpolation of the samples.
    pub fn point_at(&self, s: f64) -> Point {
        let k = self.locate(s);
        let (s0, s1) = (self.params[k], self.params[k + 1]);
        let u = ((s - s0) / (s1 - s0)).clamp(0.0, 1.0);
        axpy(&self.points[k], u, &sub(&self.points[k + 1], &self.points[k]))
    }

    /// Resamples at `m + 1` equally spaced parameters of the piecewise
    /// linear interpolant.
    pub fn resampled(&self, m: usize) -> Self {
        let (a, b) = self.param_range();
        let m = m.max(1);
        let params: Vec<f64> = (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect();
        let points = params.iter().map(|&s| self.point_at(s)).collect();
        Self { points, params }
    }
}

fn scale_diff(b: &Point, a: &Point, h: f64) -> Point {
    let d = sub(b, a);
    [d[0] / h, d[1] / h, d[2] / h, d[3] / h]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::metric::MetricField;

    fn flat() -> MetricSampler {
        MetricSampler::new(&MetricField::flat(&TorusGrid::unit(8).unwrap()))
    }

    #[test]
    fn straight_segment_has_euclidean_length_and_no_acceleration() {
        let pts: Vec<Point> = (0..=10).map(|k| [0.1 * k as f64, 0.05 * k as f64, 0.0, 0.0]).collect();
        let c = Curve::uniform(pts).unwrap();
        let s = flat();
        let l = c.length(&s);
        assert!((l - (1.0f64 + 0.25).sqrt()).abs() < 1e-12);
        assert!(c.accelerations(&s).iter().all(|a| *a < 1e-10));
        assert!(c.speeds(&s).iter().all(|v| (v - l).abs() < 1e-10));
        let a = c.arclength_parametrized(&s).unwrap();
        assert!(a.speeds(&s).iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn hermite_interpolates_samples() {
        let pts: Vec<Point> = (0..=8)
            .map(|k| {
                let t = k as f64 / 8.0;
                [t, (3.0 * t).sin() * 0.1, 0.0, 0.0]
            })
            .collect();
        let c = Curve::uniform(pts).unwrap();
        let vel = c.node_velocities();
        let (x, v) = c.hermite(0.25, &vel);
        assert!((x[1] - c.points()[2][1]).abs() < 1e-14);
        assert!((v[0] - 1.0).abs() < 1e-12);
        let (x, _) = c.hermite(0.3, &vel);
        assert!((x[1] - (0.9f64).sin() * 0.1).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Curve::new(alloc::vec![[0.0; 4]], alloc::vec![0.0]).is_err());
        assert!(Curve::new(alloc::vec![[0.0; 4]; 2], alloc::vec![1.0, 1.0]).is_err());
        let c = Curve::uniform(alloc::vec![[0.0; 4], [1.0, 0.0, 0.0, 0.0]]).unwrap().reversed();
        assert_eq!(c.start()[0], 1.0);
    }
}
