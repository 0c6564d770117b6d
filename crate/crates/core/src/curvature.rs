//! Pointwise curvature of a discrete metric and the derived curvature bundle.
//!
//! Sign convention: `R_ijkl = g(R(∂_i, ∂_j)∂_k, ∂_l)` with
//! `R(X, Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`, so sectional curvature is
//! `R_ijji` and `Rc_jk = g^il R_ijkl`. The Riemann tensor is held as a
//! symmetric 6×6 matrix on 2-forms (21 stored values per point); the first
//! Bianchi identity is not imposed by the storage and can be tested.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::field::{first, mixed, second, Field, Neighborhood, AXIS_PAIRS};
use crate::grid::{TorusGrid, DIM};
use crate::linalg::{cholesky, lower_inverse, spd_inverse_det, wedge_square, Mat4, Sym4, FORM_INDEX, FORM_PAIRS, SYM_INDEX, SYM_PAIRS};
use crate::metric::MetricField;

/// Highest covariant derivative order of `Rm` the bundle computes.
pub const MAX_DERIVATIVE_ORDER: usize = 3;

/// Number of stored values of an algebraic curvature tensor.
pub const RM_COMPS: usize = 21;

pub type Tensor3 = [[[f64; 4]; 4]; 4];
pub type Tensor4 = [[[[f64; 4]; 4]; 4]; 4];
/// Curvature operator on 2-forms, `R_{(ij),(kl)}` with `i<j`, `k<l`.
pub type Rm6 = [[f64; 6]; 6];

/// Packed upper-triangle order of a symmetric 6×6 matrix.
pub const RM_PAIRS: [(usize, usize); RM_COMPS] = {
    let mut t = [(0, 0); RM_COMPS];
    let mut n = 0;
    let mut a = 0;
    while a < 6 {
        let mut b = a;
        while b < 6 {
            t[n] = (a, b);
            n += 1;
            b += 1;
        }
        a += 1;
    }
    t
};

pub const RM_INDEX: [[usize; 6]; 6] = {
    let mut t = [[0; 6]; 6];
    let mut n = 0;
    while n < RM_COMPS {
        let (a, b) = RM_PAIRS[n];
        t[a][b] = n;
        t[b][a] = n;
        n += 1;
    }
    t
};

pub fn pack_rm(r: &Rm6) -> [f64; RM_COMPS] {
    let mut out = [0.0; RM_COMPS];
    for (n, &(a, b)) in RM_PAIRS.iter().enumerate() {
        out[n] = 0.5 * (r[a][b] + r[b][a]);
    }
    out
}

pub fn unpack_rm(p: &[f64]) -> Rm6 {
    let mut r = [[0.0; 6]; 6];
    for (n, &(a, b)) in RM_PAIRS.iter().enumerate() {
        r[a][b] = p[n];
        r[b][a] = p[n];
    }
    r
}

/// Full-index access `R_ijkl` from the 2-form representation.
#[inline]
pub fn rm_component(r: &Rm6, i: usize, j: usize, k: usize, l: usize) -> f64 {
    match (FORM_INDEX[i][j], FORM_INDEX[k][l]) {
        (Some((a, sa)), Some((b, sb))) => sa * sb * r[a][b],
        _ => 0.0,
    }
}

pub fn rm_full(r: &Rm6) -> Tensor4 {
    let mut t = [[[[0.0; 4]; 4]; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    t[i][j][k][l] = rm_component(r, i, j, k, l);
                }
            }
        }
    }
    t
}

/// Metric value with first and second partial derivatives at a grid point.
#[derive(Clone, Copy, Debug)]
pub struct MetricJet {
    pub g: Mat4,
    /// `dg[c][a][b] = ∂_c g_ab`.
    pub dg: [Mat4; 4],
    /// `ddg[c][d][a][b] = ∂_c ∂_d g_ab`.
    pub ddg: [[Mat4; 4]; 4],
}

fn unpack(s: &[f64; 10]) -> Mat4 {
    Sym4(*s).to_full()
}

/// Fourth-order finite-difference jet of the metric at `idx`.
pub fn metric_jet(metric: &MetricField, idx: usize) -> MetricJet {
    let grid = metric.grid();
    let data = metric.field().data();
    let h = grid.spacing();
    let nb = Neighborhood::new(grid, idx);
    let g = metric.full_at(idx);
    let mut buf = [0.0; 10];
    let mut dg = [[[0.0; 4]; 4]; 4];
    for a in 0..DIM {
        first(data, 10, &nb, a, 1.0 / h[a], &mut buf);
        dg[a] = unpack(&buf);
    }
    let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..DIM {
        second(data, 10, &nb, a, 1.0 / (h[a] * h[a]), &mut buf);
        ddg[a][a] = unpack(&buf);
    }
    for &(a, b) in AXIS_PAIRS.iter() {
        mixed(data, 10, &nb, a, b, 1.0 / (h[a] * h[b]), &mut buf);
        let m = unpack(&buf);
        ddg[a][b] = m;
        ddg[b][a] = m;
    }
    MetricJet { g, dg, ddg }
}

/// Christoffel symbols and curvature operator at one point.
#[derive(Clone, Copy, Debug)]
pub struct PointCurvature {
    pub g: Mat4,
    pub ginv: Mat4,
    pub sqrt_det: f64,
    /// First kind, `first_kind[e][a][b] = Γ_{e,ab}`.
    pub first_kind: Tensor3,
    /// Second kind, `christoffel[m][a][b] = Γ^m_ab`.
    pub christoffel: Tensor3,
    pub rm: Rm6,
}

pub fn first_kind(dg: &[Mat4; 4]) -> Tensor3 {
    let mut c = [[[0.0; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for b in a..4 {
                let v = 0.5 * (dg[a][b][e] + dg[b][a][e] - dg[e][a][b]);
                c[e][a][b] = v;
                c[e][b][a] = v;
            }
        }
    }
    c
}

pub fn raise_first(ginv: &Mat4, c: &Tensor3) -> Tensor3 {
    let mut out = [[[0.0; 4]; 4]; 4];
    for m in 0..4 {
        for e in 0..4 {
            let w = ginv[m][e];
            for a in 0..4 {
                for b in 0..4 {
                    out[m][a][b] += w * c[e][a][b];
                }
            }
        }
    }
    out
}

impl PointCurvature {
    /// `None` when the metric is not positive definite.
    pub fn from_jet(jet: &MetricJet) -> Option<Self> {
        let (ginv, det) = spd_inverse_det(&jet.g)?;
        let c1 = first_kind(&jet.dg);
        let c2 = raise_first(&ginv, &c1);
        let mut rm = [[0.0; 6]; 6];
        for (p, &(i, j)) in FORM_PAIRS.iter().enumerate() {
            for (q, &(k, l)) in FORM_PAIRS.iter().enumerate().skip(p) {
                let dd = &jet.ddg;
                let lin = 0.5
                    * (dd[j][l][i][k] + dd[i][k][j][l] - dd[i][l][j][k] - dd[j][k][i][l]);
                let mut quad = 0.0;
                for e in 0..4 {
                    quad += c2[e][j][l] * c1[e][i][k] - c2[e][j][k] * c1[e][i][l];
                }
                rm[p][q] = lin + quad;
                rm[q][p] = lin + quad;
            }
        }
        Some(Self {
            g: jet.g,
            ginv,
            sqrt_det: det.sqrt(),
            first_kind: c1,
            christoffel: c2,
            rm,
        })
    }

    pub fn ricci(&self) -> Mat4 {
        ricci_of(&self.rm, &self.ginv)
    }

    /// `|Rm|²_g = R_ijkl R^ijkl`.
    pub fn rm_norm_sq(&self) -> f64 {
        rm_norm_sq(&self.rm, &self.ginv)
    }
}

pub fn ricci_of(rm: &Rm6, ginv: &Mat4) -> Mat4 {
    let mut rc = [[0.0; 4]; 4];
    for j in 0..4 {
        for k in j..4 {
            let mut s = 0.0;
            for i in 0..4 {
                for l in 0..4 {
                    s += ginv[i][l] * rm_component(rm, i, j, k, l);
                }
            }
            rc[j][k] = s;
            rc[k][j] = s;
        }
    }
    rc
}

pub fn trace(t: &Mat4, ginv: &Mat4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += ginv[i][j] * t[i][j];
        }
    }
    s
}

/// `|T|²_g` of a symmetric 2-tensor.
pub fn sym_norm_sq(t: &Mat4, ginv: &Mat4) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut ti = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    ti += ginv[i][a] * ginv[j][b] * t[a][b];
                }
            }
            s += ti * t[i][j];
        }
    }
    s
}

fn mat6_mul(a: &Rm6, b: &Rm6) -> Rm6 {
    let mut c = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            for j in 0..6 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `|Rm|² = 4 tr(R P R P)` with `P = Λ²g⁻¹`.
pub fn rm_norm_sq(rm: &Rm6, ginv: &Mat4) -> f64 {
    let p = wedge_square(ginv);
    let rp = mat6_mul(rm, &p);
    let mut s = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            s += rp[i][j] * rp[j][i];
        }
    }
    4.0 * s
}

/// `Ř_jk = R_j^{pqr} R_kpqr`.
pub fn check_tensor(rm: &Rm6, ginv: &Mat4) -> Mat4 {
    let full = rm_full(rm);
    let mut up = full;
    // raise slots 1, 2, 3 in turn
    for slot in 1..4 {
        let src = up;
        for j in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    for c in 0..4 {
                        let mut s = 0.0;
                        for m in 0..4 {
                            let v = match slot {
                                1 => ginv[a][m] * src[j][m][b][c],
                                2 => ginv[b][m] * src[j][a][m][c],
                                _ => ginv[c][m] * src[j][a][b][m],
                            };
                            s += v;
                        }
                        up[j][a][b][c] = s;
                    }
                }
            }
        }
    }
    let mut ch = [[0.0; 4]; 4];
    for j in 0..4 {
        for k in j..4 {
            let mut s = 0.0;
            for p in 0..4 {
                for q in 0..4 {
                    for r in 0..4 {
                        s += up[j][p][q][r] * full[k][p][q][r];
                    }
                }
            }
            ch[j][k] = s;
            ch[k][j] = s;
        }
    }
    ch
}

/// Orthonormal coframe `F = L⁻¹` with `g = L Lᵀ`, so that `Fᵀ F = g⁻¹`.
pub fn orthonormal_coframe(g: &Mat4) -> Option<Mat4> {
    cholesky(g).map(|l| lower_inverse(&l))
}

/// Action of `Γ_a` on the 2-form slot: `(ga·R)_A = Σ_m Γ^m_ai R_(mj) + Γ^m_aj R_(im)`.
fn form_connection(christoffel: &Tensor3, a: usize) -> Rm6 {
    let mut m6 = [[0.0; 6]; 6];
    for (p, &(i, j)) in FORM_PAIRS.iter().enumerate() {
        for m in 0..4 {
            if let Some((c, s)) = FORM_INDEX[m][j] {
                m6[p][c] += christoffel[m][a][i] * s;
            }
            if let Some((c, s)) = FORM_INDEX[i][m] {
                m6[p][c] += christoffel[m][a][j] * s;
            }
        }
    }
    m6
}

/// Covariant derivative of a field of tensors `T_{b1..bm, (ij),(kl)}` with
/// `m = order` leading slots; returns the field of `∇T` with the new
/// derivative slot first.
pub fn covariant_derivative(t: &Field, order: usize, christoffel: &Field) -> Field {
    let grid = t.grid().clone();
    let lead = 4usize.pow(order as u32);
    let comps_in = lead * RM_COMPS;
    assert_eq!(t.comps(), comps_in);
    let comps_out = 4 * comps_in;
    let h = grid.spacing();
    Field::from_fn(&grid, comps_out, |idx, out| {
        let nb = Neighborhood::new(&grid, idx);
        let gam = unpack_christoffel(christoffel.at(idx));
        let here = t.at(idx);
        for a in 0..4 {
            let dst = &mut out[a * comps_in..(a + 1) * comps_in];
            first(t.data(), comps_in, &nb, a, 1.0 / h[a], dst);
            covariant_correction(here, order, &gam, a, dst);
        }
    })
}

/// Subtracts the connection terms of `∇_a` from `dst` (which holds `∂_a T`).
fn covariant_correction(t: &[f64], order: usize, gam: &Tensor3, a: usize, dst: &mut [f64]) {
    let lead = 4usize.pow(order as u32);
    let fc = form_connection(gam, a);
    // 2-form slots
    for m in 0..lead {
        let r = unpack_rm(&t[m * RM_COMPS..(m + 1) * RM_COMPS]);
        let fr = mat6_mul(&fc, &r);
        for (n, &(p, q)) in RM_PAIRS.iter().enumerate() {
            dst[m * RM_COMPS + n] -= fr[p][q] + fr[q][p];
        }
    }
    // leading derivative slots
    for slot in 0..order {
        let stride = 4usize.pow((order - 1 - slot) as u32);
        for m in 0..lead {
            let b = (m / stride) % 4;
            let base = m - b * stride;
            for c in 0..4 {
                let w = gam[c][a][b];
                if w == 0.0 {
                    continue;
                }
                let src = base + c * stride;
                for n in 0..RM_COMPS {
                    dst[m * RM_COMPS + n] -= w * t[src * RM_COMPS + n];
                }
            }
        }
    }
}

/// `|T|²_g` of a tensor with `order` leading slots and a curvature-type tail.
pub fn curvature_tensor_norm_sq(t: &[f64], order: usize, coframe: &Mat4) -> f64 {
    let lead = 4usize.pow(order as u32);
    let w = wedge_square(coframe);
    // transform 2-form slots
    let mut tr = vec![0.0; lead * 36];
    for m in 0..lead {
        let r = unpack_rm(&t[m * RM_COMPS..(m + 1) * RM_COMPS]);
        let wr = mat6_mul(&w, &r);
        for p in 0..6 {
            for q in 0..6 {
                let mut s = 0.0;
                for k in 0..6 {
                    s += wr[p][k] * w[q][k];
                }
                tr[m * 36 + p * 6 + q] = s;
            }
        }
    }
    // transform leading slots
    for slot in 0..order {
        let stride = 4usize.pow((order - 1 - slot) as u32);
        let src = tr.clone();
        for m in 0..lead {
            let alpha = (m / stride) % 4;
            let base = m - alpha * stride;
            for e in 0..36 {
                let mut s = 0.0;
                for b in 0..4 {
                    s += coframe[alpha][b] * src[(base + b * stride) * 36 + e];
                }
                tr[m * 36 + e] = s;
            }
        }
    }
    4.0 * tr.iter().map(|v| v * v).sum::<f64>()
}

pub fn pack_christoffel(c: &Tensor3) -> [f64; 40] {
    let mut out = [0.0; 40];
    for m in 0..4 {
        for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            out[m * 10 + k] = c[m][a][b];
        }
    }
    out
}

pub fn unpack_christoffel(p: &[f64]) -> Tensor3 {
    let mut c = [[[0.0; 4]; 4]; 4];
    for m in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                c[m][a][b] = p[m * 10 + SYM_INDEX[a][b]];
            }
        }
    }
    c
}

/// All curvature quantities of one metric, immutable after construction.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    grid: TorusGrid,
    max_order: usize,
    /// `Γ^m_ab`, 40 values per point.
    pub christoffel: Field,
    /// `R_{(ij),(kl)}`, 21 values per point.
    pub riemann: Field,
    pub ricci: Field,
    pub scalar: Field,
    pub traceless_ricci: Field,
    /// `Ř_ij = R_i^{pqr} R_jpqr`.
    pub check_tensor: Field,
    pub rm_norm_sq: Field,
    pub volume_density: Field,
    /// `ginv` packed, 10 values per point.
    pub inverse_metric: Field,
    /// `∇^m Rm` for `m = 1..=min(max_order, 2)`.
    pub rm_derivatives: Vec<Field>,
    /// `|∇^m Rm|` for `m = 1..=max_order`.
    pub rm_derivative_norms: Vec<Field>,
}

impl CurvatureBundle {
    pub fn build(metric: &MetricField, max_derivative_order: usize) -> Result<Self> {
        if max_derivative_order > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder {
                requested: max_derivative_order,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        let grid = metric.grid().clone();
        if grid.n() < 2 * crate::field::RADIUS + 1 {
            return Err(Error::GridTooSmall {
                n: grid.n(),
                min: 2 * crate::field::RADIUS + 1,
            });
        }
        metric.validate()?;
        let n = grid.len();
        let points: Vec<PointCurvature> = crate::par::map_collect(n, |idx| {
            PointCurvature::from_jet(&metric_jet(metric, idx)).expect("validated metric")
        });
        let pack_sym = |m: &Mat4, out: &mut [f64]| {
            for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                out[k] = m[a][b];
            }
        };
        let christoffel = Field::from_fn(&grid, 40, |i, out| {
            out.copy_from_slice(&pack_christoffel(&points[i].christoffel))
        });
        let riemann = Field::from_fn(&grid, RM_COMPS, |i, out| {
            out.copy_from_slice(&pack_rm(&points[i].rm))
        });
        let ricci = Field::from_fn(&grid, 10, |i, out| pack_sym(&points[i].ricci(), out));
        let scalar = Field::from_fn(&grid, 1, |i, out| {
            out[0] = trace(&points[i].ricci(), &points[i].ginv)
        });
        let traceless_ricci = Field::from_fn(&grid, 10, |i, out| {
            let p = &points[i];
            let rc = p.ricci();
            let r = trace(&rc, &p.ginv);
            let mut t = rc;
            for a in 0..4 {
                for b in 0..4 {
                    t[a][b] -= 0.25 * r * p.g[a][b];
                }
            }
            pack_sym(&t, out)
        });
        let check = Field::from_fn(&grid, 10, |i, out| {
            pack_sym(&check_tensor(&points[i].rm, &points[i].ginv), out)
        });
        let rm_norm_sq = Field::from_fn(&grid, 1, |i, out| out[0] = points[i].rm_norm_sq());
        let volume_density = Field::from_fn(&grid, 1, |i, out| out[0] = points[i].sqrt_det);
        let inverse_metric = Field::from_fn(&grid, 10, |i, out| pack_sym(&points[i].ginv, out));
        let coframes: Vec<Mat4> = points
            .iter()
            .map(|p| orthonormal_coframe(&p.g).expect("validated metric"))
            .collect();
        drop(points);

        let mut rm_derivatives = Vec::new();
        let mut rm_derivative_norms = Vec::new();
        let mut current = riemann.clone();
        for order in 1..=max_derivative_order {
            if order <= 2 {
                let next = covariant_derivative(&current, order - 1, &christoffel);
                let norms = Field::from_fn(&grid, 1, |i, out| {
                    out[0] = curvature_tensor_norm_sq(next.at(i), order, &coframes[i]).sqrt()
                });
                rm_derivative_norms.push(norms);
                rm_derivatives.push(next.clone());
                current = next;
            } else {
                // third derivative is only needed pointwise for its norm
                let lead = 4usize.pow(2);
                let comps_in = lead * RM_COMPS;
                let h = grid.spacing();
                let norms = Field::from_fn(&grid, 1, |idx, out| {
                    let nb = Neighborhood::new(&grid, idx);
                    let gam = unpack_christoffel(christoffel.at(idx));
                    let here = current.at(idx);
                    let mut buf = vec![0.0; 4 * comps_in];
                    for a in 0..4 {
                        let dst = &mut buf[a * comps_in..(a + 1) * comps_in];
                        first(current.data(), comps_in, &nb, a, 1.0 / h[a], dst);
                        covariant_correction(here, 2, &gam, a, dst);
                    }
                    out[0] = curvature_tensor_norm_sq(&buf, 3, &coframes[idx]).sqrt();
                });
                rm_derivative_norms.push(norms);
            }
        }

        Ok(Self {
            grid,
            max_order: max_derivative_order,
            christoffel,
            riemann,
            ricci,
            scalar,
            traceless_ricci,
            check_tensor: check,
            rm_norm_sq,
            volume_density,
            inverse_metric,
            rm_derivatives,
            rm_derivative_norms,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `|∇^m Rm|` at every point, `m = 0` giving `|Rm|`.
    pub fn rm_derivative_norm(&self, m: usize) -> Option<Vec<f64>> {
        if m == 0 {
            return Some(self.rm_norm_sq.data().iter().map(|v| v.max(0.0).sqrt()).collect());
        }
        self.rm_derivative_norms.get(m - 1).map(|f| f.data().to_vec())
    }

    /// `f_k = Σ_{j≤k} |∇^j Rm|^{2/(2+j)}` at every point.
    pub fn fk(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.max_order {
            return Err(Error::DerivativeOrder {
                requested: k,
                max: self.max_order,
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        for j in 0..=k {
            let norms = self.rm_derivative_norm(j).expect("order checked");
            let e = 2.0 / (2.0 + j as f64);
            for (o, v) in out.iter_mut().zip(norms.iter()) {
                *o += v.powf(e);
            }
        }
        Ok(out)
    }

    /// Packed `R_{(ij),(kl)}` at a point as a 6×6 matrix.
    pub fn rm_at(&self, idx: usize) -> Rm6 {
        unpack_rm(self.riemann.at(idx))
    }

    pub fn ginv_at(&self, idx: usize) -> Mat4 {
        let mut s = [0.0; 10];
        s.copy_from_slice(self.inverse_metric.at(idx));
        Sym4(s).to_full()
    }

    pub fn sym_at(field: &Field, idx: usize) -> Mat4 {
        let mut s = [0.0; 10];
        s.copy_from_slice(field.at(idx));
        Sym4(s).to_full()
    }
}

/// Maximum over points of `|f_k(x, cg) − f_k(x, g)/c| / (f_k(x, g) + ε_div)`.
pub fn fk_scaling_check(metric: &MetricField, k: usize, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("scale factor must be positive, got {c}")));
    }
    const EPS_DIV: f64 = 1e-12;
    let base = CurvatureBundle::build(metric, k)?.fk(k)?;
    let scaled = CurvatureBundle::build(&metric.scaled(c)?, k)?.fk(k)?;
    Ok(base
        .iter()
        .zip(scaled.iter())
        .map(|(b, s)| (s - b / c).abs() / (b + EPS_DIV))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perturbed(n: usize) -> MetricField {
        let grid = TorusGrid::unit(n).unwrap();
        MetricField::band_limited(&grid, 0.05, 1, 3).unwrap()
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let grid = TorusGrid::unit(8).unwrap();
        let b = CurvatureBundle::build(&MetricField::flat(&grid), 3).unwrap();
        assert_eq!(b.riemann.max_abs(), 0.0);
        assert_eq!(b.ricci.max_abs(), 0.0);
        assert!(b.fk(3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_order_above_three() {
        let grid = TorusGrid::unit(8).unwrap();
        assert!(matches!(
            CurvatureBundle::build(&MetricField::flat(&grid), 4),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn riemann_symmetries_and_bianchi() {
        let m = perturbed(8);
        let b = CurvatureBundle::build(&m, 0).unwrap();
        let scale = b.riemann.max_abs();
        for idx in (0..m.grid().len()).step_by(7) {
            let t = rm_full(&b.rm_at(idx));
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for l in 0..4 {
                            let r = t[i][j][k][l];
                            assert_eq!(r, -t[j][i][k][l]);
                            assert_eq!(r, -t[i][j][l][k]);
                            assert_eq!(r, t[k][l][i][j]);
                            let bianchi = r + t[j][k][i][l] + t[k][i][j][l];
                            assert!(bianchi.abs() <= 1e-9 * scale, "{bianchi}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn traceless_ricci_identity() {
        let m = perturbed(8);
        let b = CurvatureBundle::build(&m, 0).unwrap();
        for idx in (0..m.grid().len()).step_by(11) {
            let ginv = b.ginv_at(idx);
            let rc = CurvatureBundle::sym_at(&b.ricci, idx);
            let tl = CurvatureBundle::sym_at(&b.traceless_ricci, idx);
            let r = b.scalar.at(idx)[0];
            assert!(trace(&tl, &ginv).abs() < 1e-12 * (1.0 + r.abs()));
            let lhs = sym_norm_sq(&tl, &ginv);
            let rhs = sym_norm_sq(&rc, &ginv) - 0.25 * r * r;
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            // trace of the check tensor is |Rm|²
            let ch = CurvatureBundle::sym_at(&b.check_tensor, idx);
            let nsq = b.rm_norm_sq.at(idx)[0];
            assert!((trace(&ch, &ginv) - nsq).abs() <= 1e-10 * nsq.max(1e-300));
        }
    }

    #[test]
    fn constant_scaling_ladder() {
        let m = perturbed(8);
        let c = 2.5;
        let a = CurvatureBundle::build(&m, 1).unwrap();
        let s = CurvatureBundle::build(&m.scaled(c).unwrap(), 1).unwrap();
        for idx in (0..m.grid().len()).step_by(13) {
            let ra = a.riemann.at(idx);
            let rs = s.riemann.at(idx);
            for (x, y) in ra.iter().zip(rs.iter()) {
                assert!((y - c * x).abs() <= 1e-12 * (1.0 + x.abs()));
            }
            let na = a.rm_norm_sq.at(idx)[0];
            let ns = s.rm_norm_sq.at(idx)[0];
            assert!((ns - na / (c * c)).abs() <= 1e-10 * na);
            assert!((s.scalar.at(idx)[0] - a.scalar.at(idx)[0] / c).abs() <= 1e-10 * (1.0 + a.scalar.at(idx)[0].abs()));
            for (x, y) in a.ricci.at(idx).iter().zip(s.ricci.at(idx).iter()) {
                assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn sphere_like_sign_convention() {
        // R_ijkl = g_il g_jk − g_ik g_jl on a unit sphere gives Rc = 3g in dimension 4
        let g = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let mut rm = [[0.0; 6]; 6];
        for (p, &(i, j)) in FORM_PAIRS.iter().enumerate() {
            for (q, &(k, l)) in FORM_PAIRS.iter().enumerate() {
                rm[p][q] = g[i][l] * g[j][k] - g[i][k] * g[j][l];
            }
        }
        let rc = ricci_of(&rm, &g);
        assert_eq!(rc[0][0], 3.0);
        assert_eq!(rm_norm_sq(&rm, &g), 24.0);
        let ch = check_tensor(&rm, &g);
        assert_eq!(ch[1][1], 6.0);
    }
}
