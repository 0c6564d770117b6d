//! Heuristic injectivity radius of a near-flat torus metric.

#[allow(unused_imports)]
use num_traits::Float;

use super::curve::Curve;
use super::distance::{DistanceConfig, GeodesicSolver};
use crate::curvature::CurvatureBundle;
use crate::error::Result;
use crate::grid::DIM;
use crate::metric::MetricField;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Candidate base points relaxed per axis class.
const CANDIDATES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjEstimate {
    /// Half the shortest loop found.
    pub value: f64,
    pub shortest_loop: f64,
    /// Lattice direction of the shortest loop.
    pub axis: usize,
    /// `π / √sup|Rm|`, a lower bound for the conjugate radius.
    pub conjugate_bound: f64,
    /// `value ≤ conjugate_bound`, i.e. `sup|Rm| · value² ≤ π²`. Then
    /// Klingenberg's lemma makes half the shortest closed geodesic the
    /// injectivity radius, provided the loop search found that geodesic.
    pub confident: bool,
}

/// Half the length of the shortest loop over the lattice classes `±e_a`.
///
/// For each axis the coordinate lines through all grid points are measured,
/// and the shortest few are relaxed to geodesic loops at their base point.
/// Conjugate points are ignored; see [`InjEstimate::confident`].
pub fn inj_estimate(metric: &MetricField) -> Result<InjEstimate> {
    let grid = metric.grid();
    let n = grid.n();
    let h = grid.spacing();
    let periods = grid.periods();
    let solver = GeodesicSolver::new(metric, DistanceConfig::default());
    let mut best = (f64::INFINITY, 0usize);
    for axis in 0..DIM {
        let stride = grid.strides()[axis];
        let mut lines: Vec<(f64, usize)> = (0..grid.len())
            .filter(|&i| grid.coords(i)[axis] == 0)
            .map(|i| {
                let len: f64 = (0..n)
                    .map(|k| metric.full_at(i + k * stride)[axis][axis].sqrt() * h[axis])
                    .sum();
                (len, i)
            })
            .collect();
        lines.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(straight, base) in lines.iter().take(CANDIDATES) {
            let p = grid.position(base);
            let m = (2 * n).max(8);
            let pts = (0..=m)
                .map(|k| {
                    let mut x = p;
                    x[axis] += periods[axis] * k as f64 / m as f64;
                    x
                })
                .collect();
            let initial = Curve::uniform(pts)?;
            let (relaxed, _, _) = solver.relax_curve(&initial);
            let len = relaxed.length(solver.sampler()).min(straight);
            if len < best.0 {
                best = (len, axis);
            }
        }
    }
    let bundle = CurvatureBundle::build(metric, 0)?;
    let sup_rm = crate::norms::sup_norm(bundle.rm_norm_sq.data()).sqrt();
    let conjugate_bound = if sup_rm > 0.0 { PI / sup_rm.sqrt() } else { f64::INFINITY };
    let value = 0.5 * best.0;
    Ok(InjEstimate {
        value,
        shortest_loop: best.0,
        axis: best.1,
        conjugate_bound,
        confident: value <= conjugate_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn flat_tori() {
        let m = MetricField::flat(&TorusGrid::unit(8).unwrap());
        let e = inj_estimate(&m).unwrap();
        assert!((e.value - 0.5).abs() < 1e-12 && e.confident);
        let m = MetricField::flat(&TorusGrid::new(8, [1.0, 2.0, 2.0, 2.0]).unwrap());
        let e = inj_estimate(&m).unwrap();
        assert!((e.value - 0.5).abs() < 1e-12 && e.axis == 0);
    }

    #[test]
    fn conformal_metric_is_within_eps() {
        let eps = 0.05;
        let m = MetricField::conformal_mode(&TorusGrid::unit(12).unwrap(), eps, 0, 1).unwrap();
        let e = inj_estimate(&m).unwrap();
        // shortest loops sit where e^{u} is smallest: length e^{−ε}
        assert!((e.value - 0.5 * (-eps).exp()).abs() < 1e-3, "{}", e.value);
        assert!((e.value - 0.5).abs() <= eps);
        assert!(e.confident);
    }
}
