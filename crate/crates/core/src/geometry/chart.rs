//! Normal coordinates by geodesic shooting and the norm of their
//! Christoffel symbols.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::exp::{exp_fixed, steps_for};
use super::sampler::MetricSampler;
use super::{axpy, scale, sub, Point};
use crate::curvature::{first_kind, raise_first, Tensor3};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, gram_schmidt, spd_inverse_det, sym_eigenvalues, Mat4};
use crate::metric::MetricField;

/// `y ↦ exp_p(Σ y^a E_a)` with `E` a `g(p)`-orthonormal frame.
#[derive(Clone, Debug)]
pub struct NormalChart {
    sampler: MetricSampler,
    center: Point,
    frame: [Point; 4],
    steps: usize,
    radius: f64,
    /// Step of the difference quotient for `∂Φ`.
    pub map_step: f64,
    /// Step of the difference quotient for `∂ĝ`.
    pub metric_step: f64,
}

impl NormalChart {
    /// Chart on the normal ball of the given radius. Fails when shooting
    /// breaks down or the pulled-back metric degenerates on the ball.
    pub fn new(metric: &MetricField, center: Point, radius: f64) -> Result<Self> {
        let sampler = MetricSampler::new(metric);
        let g = sampler.metric(&center);
        let e = gram_schmidt(&g, &[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        if e.len() != 4 {
            return Err(Error::ChartFailure { point: center });
        }
        let lam = sym_eigenvalues(&g)[0].max(1e-12);
        let steps = steps_for(&sampler, 1.5 * radius / lam.sqrt());
        let chart = Self {
            sampler,
            center,
            frame: [e[0], e[1], e[2], e[3]],
            steps,
            radius,
            map_step: 1e-4 * radius,
            metric_step: 1e-2 * radius,
        };
        for y in probe_lattice(radius, 1) {
            let gh = chart.metric(&y).ok_or(Error::ChartFailure { point: center })?;
            if spd_inverse_det(&gh).is_none() {
                return Err(Error::ChartFailure { point: center });
            }
        }
        Ok(chart)
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn point(&self, y: &Point) -> Option<Point> {
        let mut v = [0.0; 4];
        for (a, e) in self.frame.iter().enumerate() {
            v = axpy(&v, y[a], e);
        }
        exp_fixed(&self.sampler, &self.center, &v, self.steps)
    }

    /// Pulled-back metric `ĝ_ab(y) = g(∂_aΦ, ∂_bΦ)`.
    pub fn metric(&self, y: &Point) -> Option<Mat4> {
        let d = self.map_step;
        let mut cols = [[0.0; 4]; 4];
        for (a, c) in cols.iter_mut().enumerate() {
            let (mut yp, mut ym) = (*y, *y);
            yp[a] += d;
            ym[a] -= d;
            *c = scale(&sub(&self.point(&yp)?, &self.point(&ym)?), 0.5 / d);
        }
        let g = self.sampler.metric(&self.point(y)?);
        let mut out = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                out[a][b] = bilinear(&g, &cols[a], &cols[b]);
            }
        }
        Some(out)
    }

    /// Christoffel symbols of the chart at `y`.
    pub fn christoffel(&self, y: &Point) -> Option<(Mat4, Tensor3)> {
        let d = self.metric_step;
        let g = self.metric(y)?;
        let mut dg = [[[0.0; 4]; 4]; 4];
        for (c, m) in dg.iter_mut().enumerate() {
            let (mut yp, mut ym) = (*y, *y);
            yp[c] += d;
            ym[c] -= d;
            let (gp, gm) = (self.metric(&yp)?, self.metric(&ym)?);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] = (gp[a][b] - gm[a][b]) / (2.0 * d);
                }
            }
        }
        let (ginv, _) = spd_inverse_det(&g)?;
        Some((g, raise_first(&ginv, &first_kind(&dg))))
    }

    /// Smallest `C` with `|Γ(u, v)|_ĝ ≤ C |u|_ĝ |v|_ĝ` at `y`.
    pub fn gamma_norm_at(&self, y: &Point) -> Result<f64> {
        let (g, gam) = self.christoffel(y).ok_or(Error::ChartFailure { point: self.center })?;
        Ok(bilinear_bound(&g, &gam))
    }
}

/// `sup_{|w|=1} max |eig(Σ_m w_m Γ^m)|` in a `g`-orthonormal frame, which is
/// the operator norm of the symmetric bilinear map `Γ`. The supremum over the
/// output direction is taken over an `S³` rule and then refined by
/// projected power steps.
pub fn bilinear_bound(g: &Mat4, gam: &Tensor3) -> f64 {
    let e = gram_schmidt(g, &[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
    // Γ in the orthonormal frame: t[m][a][b] = g(E_m, Γ(E_a, E_b)).
    let mut t = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let s = super::sampler::contract(gam, &e[a], &e[b]);
            for m in 0..4 {
                t[m][a][b] = bilinear(g, &e[m], &s);
            }
        }
    }
    let op = |w: &[f64; 4]| -> (f64, [f64; 4]) {
        let mut m = [[0.0; 4]; 4];
        for k in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w[k] * t[k][a][b];
                }
            }
        }
        let ev = sym_eigenvalues(&m);
        let val = ev[0].abs().max(ev[3].abs());
        // gradient of the extreme eigenvalue along w: u^T T^k u
        let eig = nalgebra::SymmetricEigen::new(crate::linalg::to_na(&m));
        let idx = (0..4)
            .max_by(|&i, &j| eig.eigenvalues[i].abs().total_cmp(&eig.eigenvalues[j].abs()))
            .unwrap_or(0);
        let u = eig.eigenvectors.column(idx);
        let sign = eig.eigenvalues[idx].signum();
        let mut grad = [0.0; 4];
        for (k, gk) in grad.iter_mut().enumerate() {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    s += u[a] * t[k][a][b] * u[b];
                }
            }
            *gk = sign * s;
        }
        (val, grad)
    };
    let mut best = (0.0, [1.0, 0.0, 0.0, 0.0]);
    for (w, _) in super::quadrature::sphere3(3) {
        let (v, _) = op(&w);
        if v > best.0 {
            best = (v, w);
        }
    }
    // the maximum of a convex function on the sphere: iterate w ← ∇/|∇|
    let mut w = best.1;
    for _ in 0..50 {
        let (v, grad) = op(&w);
        best.0 = best.0.max(v);
        let n = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            break;
        }
        let next = [grad[0] / n, grad[1] / n, grad[2] / n, grad[3] / n];
        if next.iter().zip(w.iter()).all(|(a, b)| (a - b).abs() < 1e-13) {
            break;
        }
        w = next;
    }
    best.0
}

/// The centre, and points at half and full radius along the 8 axis and 16
/// diagonal directions of the chart; `levels` radial levels.
fn probe_lattice(radius: f64, levels: usize) -> Vec<Point> {
    let mut dirs: Vec<Point> = Vec::new();
    for a in 0..4 {
        for sgn in [1.0, -1.0] {
            let mut d = [0.0; 4];
            d[a] = sgn;
            dirs.push(d);
        }
    }
    for k in 0..16 {
        dirs.push([
            if k & 1 == 0 { 0.5 } else { -0.5 },
            if k & 2 == 0 { 0.5 } else { -0.5 },
            if k & 4 == 0 { 0.5 } else { -0.5 },
            if k & 8 == 0 { 0.5 } else { -0.5 },
        ]);
    }
    let mut out = alloc::vec![[0.0; 4]];
    for l in 1..=levels {
        let rho = radius * l as f64 / levels as f64;
        out.extend(dirs.iter().map(|d| scale(d, rho)));
    }
    out
}

/// `|Γ|` of the normal chart at `p` over the normal ball of radius
/// `probe_radius`: the maximum of the bilinear bound over a probe lattice.
pub fn gamma_norm(metric: &MetricField, p: &Point, probe_radius: f64) -> Result<f64> {
    let chart = NormalChart::new(metric, *p, probe_radius)?;
    let probes = probe_lattice(probe_radius, 2);
    let vals: Vec<Result<f64>> = crate::par::map_collect(probes.len(), |i| chart.gamma_norm_at(&probes[i]));
    let mut worst: f64 = 0.0;
    for v in vals {
        worst = worst.max(v.map_err(|_| Error::ChartFailure { point: *p })?);
    }
    if !worst.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite chart Christoffels at {p:?}")));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn flat_chart_is_affine() {
        let m = MetricField::flat(&TorusGrid::unit(8).unwrap());
        assert!(gamma_norm(&m, &[0.1, 0.2, 0.3, 0.4], 0.1).unwrap() < 1e-8);
    }

    #[test]
    fn bilinear_bound_of_known_form() {
        // Γ(u, v) = (u·v) e_0 in the Euclidean metric has norm 1.
        let mut gam = [[[0.0; 4]; 4]; 4];
        for a in 0..4 {
            gam[0][a][a] = 1.0;
        }
        let id = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        assert!((bilinear_bound(&id, &gam) - 1.0).abs() < 1e-12);
        // Γ(u, v) = u_0 v_1 e_2 + u_1 v_0 e_2 has norm 1 (at u = v = (e_0 + e_1)/√2).
        let mut gam = [[[0.0; 4]; 4]; 4];
        gam[2][0][1] = 1.0;
        gam[2][1][0] = 1.0;
        assert!((bilinear_bound(&id, &gam) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conformal_chart_vanishes_at_centre_and_is_order_eps_nearby() {
        let eps = 0.05;
        let m = MetricField::conformal_mode(&TorusGrid::unit(12).unwrap(), eps, 0, 1).unwrap();
        let p = [0.3, 0.5, 0.5, 0.5];
        let chart = NormalChart::new(&m, p, 0.1).unwrap();
        let centre = chart.gamma_norm_at(&[0.0; 4]).unwrap();
        let off = chart.gamma_norm_at(&[0.1, 0.0, 0.0, 0.0]).unwrap();
        assert!(centre < 0.05 * off, "{centre} vs {off}");
        // |Γ| ~ |∇²u| · r ≈ ε (2π)² r
        let scale = eps * (2.0 * core::f64::consts::PI).powi(2) * 0.1;
        assert!(off > 0.1 * scale && off < 10.0 * scale, "{off} vs {scale}");
    }
}
