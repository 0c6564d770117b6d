//! Sup and Lᵖ norms of scalar grid fields.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::metric::MetricField;

/// Exact maximum of `|f|` over grid points.
pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `(Σ |f|ᵖ √det g ∏h)^{1/p}` for a pointwise scalar field such as `|Rm|`.
pub fn lp_norm(values: &[f64], p: f64, metric: &MetricField) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    if values.len() != metric.grid().len() {
        return Err(Error::GridMismatch);
    }
    let mu = metric.volume_density();
    let w = metric.grid().cell_volume();
    let s: f64 = values
        .iter()
        .zip(mu.iter())
        .map(|(v, m)| v.abs().powf(p) * m)
        .sum();
    Ok((s * w).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn homogeneous_and_rejects_small_p() {
        let grid = TorusGrid::unit(8).unwrap();
        let m = MetricField::band_limited(&grid, 0.05, 1, 1).unwrap();
        let f: alloc::vec::Vec<f64> = (0..grid.len()).map(|i| (i % 7) as f64 - 3.0).collect();
        let f5: alloc::vec::Vec<f64> = f.iter().map(|v| 5.0 * v).collect();
        let a = lp_norm(&f, 2.0, &m).unwrap();
        let b = lp_norm(&f5, 2.0, &m).unwrap();
        assert!((b - 5.0 * a).abs() < 1e-12 * b);
        assert!(matches!(lp_norm(&f, 0.5, &m), Err(Error::InvalidExponent(_))));
        assert_eq!(sup_norm(&f), 3.0);
    }
}
