//! Curvature of `g = e^{2u} δ` against the closed-form conformal-change formula.

use std::f64::consts::PI;

use l2flow_core::curvature::{rm_component, rm_norm_sq};
use l2flow_core::linalg::FORM_PAIRS;
use l2flow_core::{build_curvature, lp_norm, MetricField, TorusGrid};

/// `u = ε sin(2π k x^a / L)` with first and second derivatives.
struct Mode {
    eps: f64,
    axis: usize,
    k: f64,
    l: f64,
}

impl Mode {
    fn derivs(&self, x: [f64; 4]) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        let w = 2.0 * PI * self.k / self.l;
        let th = w * x[self.axis];
        let u = self.eps * th.sin();
        let mut du = [0.0; 4];
        du[self.axis] = self.eps * w * th.cos();
        let mut ddu = [[0.0; 4]; 4];
        ddu[self.axis][self.axis] = -self.eps * w * w * th.sin();
        (u, du, ddu)
    }

    /// `R_ijkl = −e^{2u} (A ⊙ δ)_ijkl`, `A = ∇²u − du⊗du + ½|du|²δ`, in coordinates.
    fn riemann(&self, x: [f64; 4]) -> [[[[f64; 4]; 4]; 4]; 4] {
        let (u, du, ddu) = self.derivs(x);
        let dsq: f64 = du.iter().map(|v| v * v).sum();
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                // Hessian of u for the flat background is the coordinate Hessian
                a[i][j] = ddu[i][j] - du[i] * du[j] + if i == j { 0.5 * dsq } else { 0.0 };
            }
        }
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let e2u = (2.0 * u).exp();
        let mut r = [[[[0.0; 4]; 4]; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let kn = a[i][l] * d(j, k) + a[j][k] * d(i, l) - a[i][k] * d(j, l) - a[j][l] * d(i, k);
                        r[i][j][k][l] = -e2u * kn;
                    }
                }
            }
        }
        r
    }
}

fn relative_l2_error(n: usize, mode: &Mode) -> (f64, f64, f64) {
    let grid = TorusGrid::new(n, [mode.l; 4]).unwrap();
    let metric = MetricField::conformal_mode(&grid, mode.eps, mode.axis, mode.k as u32).unwrap();
    let b = build_curvature(&metric, 0).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    let mut oracle_norm = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let x = grid.position(idx);
        let exact = mode.riemann(x);
        let rm = b.rm_at(idx);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        let e = rm_component(&rm, i, j, k, l) - exact[i][j][k][l];
                        num += e * e;
                        den += exact[i][j][k][l] * exact[i][j][k][l];
                    }
                }
            }
        }
        let mut ex6 = [[0.0; 6]; 6];
        for (p, &(i, j)) in FORM_PAIRS.iter().enumerate() {
            for (q, &(k, l)) in FORM_PAIRS.iter().enumerate() {
                ex6[p][q] = exact[i][j][k][l];
            }
        }
        oracle_norm.push(rm_norm_sq(&ex6, &b.ginv_at(idx)).sqrt());
    }
    let discrete: Vec<f64> = b.rm_norm_sq.data().iter().map(|v| v.sqrt()).collect();
    let l2_disc = lp_norm(&discrete, 2.0, &metric).unwrap();
    let l2_oracle = lp_norm(&oracle_norm, 2.0, &metric).unwrap();
    ((num / den).sqrt(), l2_disc, l2_oracle)
}

#[test]
fn conformal_riemann_matches_closed_form() {
    let mode = Mode { eps: 0.01, axis: 0, k: 1.0, l: 1.0 };
    let (err, _, _) = relative_l2_error(16, &mode);
    let h: f64 = 1.0 / 16.0;
    assert!(err <= h * h, "relative error {err}");
}

#[test]
fn conformal_error_converges_at_stencil_order() {
    let mode = Mode { eps: 0.05, axis: 2, k: 1.0, l: 1.0 };
    let (e8, _, _) = relative_l2_error(8, &mode);
    let (e16, n16, o16) = relative_l2_error(16, &mode);
    let ratio = e8 / e16;
    assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio} ({e8} -> {e16})");
    let h: f64 = 1.0 / 16.0;
    assert!((n16 - o16).abs() <= h * h * o16, "{n16} vs {o16}");
}
