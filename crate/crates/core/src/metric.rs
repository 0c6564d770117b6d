//! The flow's state variable: a positive definite symmetric 2-tensor on the grid.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{TorusGrid, DIM};
use crate::linalg::{cholesky, spd_inverse_det, Mat4, Sym4, SYM_PAIRS};

/// Metric components `g_ij` in the coordinate basis, 10 packed values per point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    field: Field,
}

impl MetricField {
    /// Wraps packed components after checking positive definiteness everywhere.
    pub fn new(field: Field) -> Result<Self> {
        if field.comps() != 10 {
            return Err(Error::InvalidArgument(alloc::format!(
                "metric field needs 10 components, got {}",
                field.comps()
            )));
        }
        let m = Self { field };
        m.validate()?;
        Ok(m)
    }

    pub fn from_fn<F>(grid: &TorusGrid, f: F) -> Result<Self>
    where
        F: Fn([f64; DIM]) -> Sym4 + Sync + Send,
    {
        let field = Field::from_fn(grid, 10, |idx, out| {
            out.copy_from_slice(&f(grid.position(idx)).0);
        });
        Self::new(field)
    }

    /// The Euclidean metric `δ_ij`.
    pub fn flat(grid: &TorusGrid) -> Self {
        Self::from_fn(grid, |_| Sym4::identity()).expect("identity metric is valid")
    }

    /// `g = exp(2ε sin(2π k x^axis / L_axis)) δ`.
    pub fn conformal_mode(grid: &TorusGrid, eps: f64, axis: usize, wavenumber: u32) -> Result<Self> {
        if axis >= DIM {
            return Err(Error::InvalidArgument(alloc::format!("axis {axis} out of range")));
        }
        let l = grid.periods()[axis];
        let k = wavenumber as f64;
        Self::from_fn(grid, move |x| {
            let u = eps * (2.0 * PI * k * x[axis] / l).sin();
            Sym4::identity().scale((2.0 * u).exp())
        })
    }

    /// `g = δ + ε h` with `h` a seeded random trigonometric field whose wave
    /// vectors have all entries in `[-max_wavenumber, max_wavenumber]` and
    /// whose components are bounded by one.
    pub fn band_limited(grid: &TorusGrid, eps: f64, max_wavenumber: u32, seed: u64) -> Result<Self> {
        let modes = BandLimitedModes::new(max_wavenumber, seed);
        let l = grid.periods();
        Self::from_fn(grid, move |x| {
            let mut s = Sym4::identity();
            for (c, v) in s.0.iter_mut().enumerate() {
                *v += eps * modes.eval(c, x, &l);
            }
            s
        })
    }

    /// Applies `g ↦ c·g` pointwise.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.field.scaled(c))
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        self.field.grid()
    }

    #[inline]
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Sym4 {
        let mut s = [0.0; 10];
        s.copy_from_slice(self.field.at(idx));
        Sym4(s)
    }

    #[inline]
    pub fn full_at(&self, idx: usize) -> Mat4 {
        self.at(idx).to_full()
    }

    /// Cholesky test at every point; the first failing point is reported.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid();
        for idx in 0..grid.len() {
            let s = self.at(idx);
            if !s.is_finite() {
                return Err(Error::NonFiniteMetric { index: idx });
            }
            if cholesky(&s.to_full()).is_none() {
                return Err(Error::NotPositiveDefinite {
                    index: idx,
                    coords: grid.coords(idx),
                });
            }
        }
        Ok(())
    }

    /// `√det g` at every point.
    pub fn volume_density(&self) -> Vec<f64> {
        (0..self.grid().len())
            .map(|i| {
                spd_inverse_det(&self.full_at(i))
                    .map(|(_, d)| d.sqrt())
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }

    /// Riemannian volume of the torus, `Σ √det g · ∏h`.
    pub fn volume(&self) -> f64 {
        let w = self.grid().cell_volume();
        crate::par::sum_points(self.grid().len(), |i| {
            spd_inverse_det(&self.full_at(i))
                .map(|(_, d)| d.sqrt())
                .unwrap_or(f64::NAN)
        }) * w
    }

    /// Riemannian volume of a set of grid points.
    pub fn region_volume(&self, region: &[usize]) -> f64 {
        let w = self.grid().cell_volume();
        region
            .iter()
            .map(|&i| spd_inverse_det(&self.full_at(i)).map(|(_, d)| d.sqrt()).unwrap_or(f64::NAN))
            .sum::<f64>()
            * w
    }

    /// `g + s·h` for a packed symmetric perturbation field `h`, validated.
    pub fn axpy(&self, s: f64, h: &Field) -> Result<Self> {
        if h.grid() != self.grid() || h.comps() != 10 {
            return Err(Error::GridMismatch);
        }
        let mut f = self.field.clone();
        f.data_mut()
            .iter_mut()
            .zip(h.data().iter())
            .for_each(|(a, b)| *a += s * b);
        Self::new(f)
    }

    /// Same as [`axpy`](Self::axpy) but without the positivity check.
    pub fn axpy_unchecked(&self, s: f64, h: &Field) -> Self {
        let mut f = self.field.clone();
        f.data_mut()
            .iter_mut()
            .zip(h.data().iter())
            .for_each(|(a, b)| *a += s * b);
        Self { field: f }
    }

    /// Pointwise linear interpolation `(1−λ)·self + λ·other`.
    pub fn lerp(&self, other: &MetricField, lambda: f64) -> Result<Self> {
        if self.grid() != other.grid() {
            return Err(Error::GridMismatch);
        }
        let mut f = self.field.clone();
        f.data_mut()
            .iter_mut()
            .zip(other.field.data().iter())
            .for_each(|(a, b)| *a = (1.0 - lambda) * *a + lambda * b);
        Self::new(f)
    }

    /// Largest pointwise difference of packed components.
    pub fn max_abs_diff(&self, other: &MetricField) -> f64 {
        self.field
            .data()
            .iter()
            .zip(other.field.data().iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Random trigonometric modes for one metric perturbation.
#[derive(Clone, Debug)]
pub struct BandLimitedModes {
    /// Per packed component: (wave vector, amplitude, phase).
    modes: Vec<Vec<([i32; DIM], f64, f64)>>,
}

impl BandLimitedModes {
    pub const MODES_PER_COMPONENT: usize = 3;

    pub fn new(max_wavenumber: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kmax = max_wavenumber.max(1) as i32;
        let mut modes = Vec::with_capacity(SYM_PAIRS.len());
        for _ in 0..SYM_PAIRS.len() {
            let mut comp = Vec::with_capacity(Self::MODES_PER_COMPONENT);
            for _ in 0..Self::MODES_PER_COMPONENT {
                let mut k = [0i32; DIM];
                while k.iter().all(|&v| v == 0) {
                    for v in k.iter_mut() {
                        *v = rng.random_range(-kmax..=kmax);
                    }
                }
                let amp: f64 = rng.random_range(-1.0..1.0);
                let phase: f64 = rng.random_range(0.0..(2.0 * PI));
                comp.push((k, amp, phase));
            }
            let norm: f64 = comp.iter().map(|m| m.1.abs()).sum::<f64>().max(1e-12);
            for m in comp.iter_mut() {
                m.1 /= norm;
            }
            modes.push(comp);
        }
        Self { modes }
    }

    #[inline]
    pub fn eval(&self, comp: usize, x: [f64; DIM], periods: &[f64; DIM]) -> f64 {
        self.modes[comp]
            .iter()
            .map(|(k, a, p)| {
                let arg: f64 = (0..DIM)
                    .map(|d| 2.0 * PI * k[d] as f64 * x[d] / periods[d])
                    .sum();
                a * (arg + p).sin()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    #[test]
    fn flat_volume_is_period_product() {
        let grid = TorusGrid::new(8, [1.0, 2.0, 1.0, 0.5]).unwrap();
        let m = MetricField::flat(&grid);
        assert!((m.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_limited_is_reproducible_and_positive() {
        let grid = TorusGrid::unit(8).unwrap();
        let a = MetricField::band_limited(&grid, 0.1, 2, 7).unwrap();
        let b = MetricField::band_limited(&grid, 0.1, 2, 7).unwrap();
        assert_eq!(a, b);
        let c = MetricField::band_limited(&grid, 0.1, 2, 8).unwrap();
        assert_ne!(a, c);
        for i in 0..grid.len() {
            assert!(sym_eigenvalues(&a.full_at(i))[0] > 0.5);
        }
    }

    #[test]
    fn indefinite_point_is_named() {
        let grid = TorusGrid::unit(8).unwrap();
        let bad = grid.index([1, 2, 3, 4]);
        let field = Field::from_fn(&grid, 10, |idx, out| {
            out.copy_from_slice(&Sym4::identity().0);
            if idx == bad {
                out[9] = -1.0;
            }
        });
        match MetricField::new(field) {
            Err(Error::NotPositiveDefinite { index, coords }) => {
                assert_eq!(index, bad);
                assert_eq!(coords, [1, 2, 3, 4]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
