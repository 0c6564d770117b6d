//! Pointwise size of the metric velocity `g' = ∂g/∂t` and of `∇g'`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::curvature::{first_kind, metric_jet, raise_first, sym_norm_sq, Tensor3};
use crate::field::{first, Field, Neighborhood};
use crate::linalg::{matmul, spd_inverse_det, Mat4, Sym4};
use crate::metric::MetricField;

/// `∇_a T_bc = ∂_a T_bc − Γ^m_ab T_mc − Γ^m_ac T_bm`.
pub fn covariant_gradient(dt: &[Mat4; 4], t: &Mat4, gam: &Tensor3) -> [Mat4; 4] {
    let mut out = *dt;
    for (a, o) in out.iter_mut().enumerate() {
        for b in 0..4 {
            for c in 0..4 {
                let mut s = 0.0;
                for m in 0..4 {
                    s += gam[m][a][b] * t[m][c] + gam[m][a][c] * t[b][m];
                }
                o[b][c] -= s;
            }
        }
    }
    out
}

/// `|∇T|²_g = g^{aa'} tr(g⁻¹ ∇_a T g⁻¹ ∇_a' T)`.
pub fn gradient_norm_sq(nt: &[Mat4; 4], ginv: &Mat4) -> f64 {
    let raised: Vec<Mat4> = nt.iter().map(|m| matmul(ginv, m)).collect();
    let mut s = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let w = ginv[a][b];
            if w == 0.0 {
                continue;
            }
            let p = matmul(&raised[a], &raised[b]);
            s += w * (p[0][0] + p[1][1] + p[2][2] + p[3][3]);
        }
    }
    s
}

/// Per grid point `(|g'|_g, |∇g'|_g)` of a packed symmetric velocity field.
pub fn velocity_norms(metric: &MetricField, velocity: &Field) -> Vec<(f64, f64)> {
    let grid = metric.grid();
    let h = grid.spacing();
    let data = velocity.data();
    crate::par::map_collect(grid.len(), |idx| {
        let jet = metric_jet(metric, idx);
        let Some((ginv, _)) = spd_inverse_det(&jet.g) else {
            return (f64::NAN, f64::NAN);
        };
        let gam = raise_first(&ginv, &first_kind(&jet.dg));
        let mut packed = [0.0; 10];
        packed.copy_from_slice(velocity.at(idx));
        let t = Sym4(packed).to_full();
        let nb = Neighborhood::new(grid, idx);
        let mut dt = [[[0.0; 4]; 4]; 4];
        for (a, d) in dt.iter_mut().enumerate() {
            let mut buf = [0.0; 10];
            first(data, 10, &nb, a, 1.0 / h[a], &mut buf);
            *d = Sym4(buf).to_full();
        }
        let nt = covariant_gradient(&dt, &t, &gam);
        (
            sym_norm_sq(&t, &ginv).max(0.0).sqrt(),
            gradient_norm_sq(&nt, &ginv).max(0.0).sqrt(),
        )
    })
}

/// `(sup|g'|_g, sup|∇g'|_g)` over the grid.
pub fn velocity_sup_norms(metric: &MetricField, velocity: &Field) -> (f64, f64) {
    velocity_norms(metric, velocity)
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (f64::max(a, x), f64::max(b, y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn parallel_tensor_has_zero_gradient() {
        // The metric itself is parallel: ∇g = 0.
        let grid = TorusGrid::unit(16).unwrap();
        let m = MetricField::conformal_mode(&grid, 0.05, 2, 1).unwrap();
        let n = velocity_norms(&m, m.field());
        for (v, dv) in n {
            assert!((v - 2.0).abs() < 1e-12);
            assert!(dv < 1e-3, "{dv}");
        }
        let flat = MetricField::flat(&grid);
        let (a, b) = velocity_sup_norms(&flat, &Field::zeros(&grid, 10));
        assert_eq!((a, b), (0.0, 0.0));
    }
}
