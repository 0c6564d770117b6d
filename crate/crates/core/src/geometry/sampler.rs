//! Off-grid evaluation of the metric and its Christoffel symbols.

#[allow(unused_imports)]
use num_traits::Float;

use super::Point;
use crate::curvature::{first_kind, raise_first, Tensor3};
use crate::field::Field;
use crate::grid::{TorusGrid, DIM};
use crate::linalg::{spd_inverse_det, Mat4, Sym4};
use crate::metric::MetricField;

/// Tensor-product Catmull–Rom interpolation of the metric.
///
/// The interpolant is C¹, and Christoffel symbols are computed from its exact
/// derivatives, so the geodesic equation, lengths and normal charts all see
/// one consistent smooth metric.
#[derive(Clone, Debug)]
pub struct MetricSampler {
    grid: TorusGrid,
    g: Field,
}

/// The 256 surrounding grid points of a position with value weights and
/// weights of the four partial derivatives.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub index: [usize; 256],
    pub weight: [f64; 256],
    pub dweight: [[f64; 256]; 4],
}

/// Catmull–Rom weights and their derivatives for the points `-1, 0, 1, 2`.
#[inline]
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

impl MetricSampler {
    pub fn new(metric: &MetricField) -> Self {
        Self {
            grid: metric.grid().clone(),
            g: metric.field().clone(),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn stencil(&self, x: &Point) -> Stencil {
        let h = self.grid.spacing();
        let mut base = [0i64; DIM];
        let mut w = [[0.0; 4]; DIM];
        let mut dw = [[0.0; 4]; DIM];
        for a in 0..DIM {
            let u = x[a] / h[a];
            let f = u.floor();
            base[a] = f as i64;
            let (v, d) = cubic_weights(u - f);
            w[a] = v;
            dw[a] = [d[0] / h[a], d[1] / h[a], d[2] / h[a], d[3] / h[a]];
        }
        let mut st = Stencil {
            index: [0; 256],
            weight: [0.0; 256],
            dweight: [[0.0; 256]; 4],
        };
        let mut n = 0;
        for i0 in 0..4 {
            for i1 in 0..4 {
                for i2 in 0..4 {
                    for i3 in 0..4 {
                        let k = [i0, i1, i2, i3];
                        st.index[n] = self.grid.index_wrapped([
                            base[0] + i0 as i64 - 1,
                            base[1] + i1 as i64 - 1,
                            base[2] + i2 as i64 - 1,
                            base[3] + i3 as i64 - 1,
                        ]);
                        let p = [w[0][i0], w[1][i1], w[2][i2], w[3][i3]];
                        st.weight[n] = p[0] * p[1] * p[2] * p[3];
                        for a in 0..DIM {
                            let mut q = dw[a][k[a]];
                            for b in (0..DIM).filter(|&b| b != a) {
                                q *= p[b];
                            }
                            st.dweight[a][n] = q;
                        }
                        n += 1;
                    }
                }
            }
        }
        st
    }

    /// Interpolates every component of `field` at the stencil.
    pub fn interpolate_into(field: &Field, st: &Stencil, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&i, &w) in st.index.iter().zip(st.weight.iter()) {
            for (o, v) in out.iter_mut().zip(field.at(i)) {
                *o += w * v;
            }
        }
    }

    /// Interpolated symmetric tensor of a 10-component field.
    pub fn interpolate_sym(&self, field: &Field, x: &Point) -> Mat4 {
        let st = self.stencil(x);
        let mut s = [0.0; 10];
        Self::interpolate_into(field, &st, &mut s);
        Sym4(s).to_full()
    }

    pub fn metric(&self, x: &Point) -> Mat4 {
        self.interpolate_sym(&self.g, x)
    }

    /// Metric and `Γ^m_ab` at `x`.
    pub fn metric_and_christoffel(&self, x: &Point) -> (Mat4, Tensor3) {
        let st = self.stencil(x);
        let mut s = [0.0; 10];
        let mut d = [[0.0; 10]; 4];
        for n in 0..256 {
            let v = self.g.at(st.index[n]);
            let w = st.weight[n];
            let dw = [st.dweight[0][n], st.dweight[1][n], st.dweight[2][n], st.dweight[3][n]];
            for c in 0..10 {
                s[c] += w * v[c];
                for a in 0..DIM {
                    d[a][c] += dw[a] * v[c];
                }
            }
        }
        let g = Sym4(s).to_full();
        let dg = [Sym4(d[0]).to_full(), Sym4(d[1]).to_full(), Sym4(d[2]).to_full(), Sym4(d[3]).to_full()];
        let ginv = spd_inverse_det(&g).map(|(i, _)| i).unwrap_or([[0.0; 4]; 4]);
        (g, raise_first(&ginv, &first_kind(&dg)))
    }

    pub fn christoffel(&self, x: &Point) -> Tensor3 {
        self.metric_and_christoffel(x).1
    }

    /// `|v|_g` at `x`.
    pub fn norm(&self, x: &Point, v: &Point) -> f64 {
        crate::linalg::quad(&self.metric(x), v).max(0.0).sqrt()
    }
}

/// `Γ(u, v)^m = Γ^m_ab u^a v^b`.
#[inline]
pub fn contract(gam: &Tensor3, u: &Point, v: &Point) -> Point {
    let mut out = [0.0; 4];
    for (m, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                s += gam[m][a][b] * u[a] * v[b];
            }
        }
        *o = s;
    }
    out
}
