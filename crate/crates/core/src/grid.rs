//! Periodic structured grid on the flat 4-torus.

use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Euclidean remainder in `[0, l)`.
#[inline]
pub fn rem_euclid(x: f64, l: f64) -> f64 {
    let r = x % l;
    if r < 0.0 {
        r + l
    } else {
        r
    }
}

/// Number of spatial dimensions.
pub const DIM: usize = 4;

/// Smallest supported number of points per axis.
pub const MIN_POINTS: usize = 8;

/// A uniform periodic grid with `n` points on each of the four axes.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    n: usize,
    periods: [f64; DIM],
}

impl TorusGrid {
    pub fn new(n: usize, periods: [f64; DIM]) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::GridTooSmall { n, min: MIN_POINTS });
        }
        if periods.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidPeriod);
        }
        Ok(Self { n, periods })
    }

    /// Unit-period grid.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, [1.0; DIM])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn periods(&self) -> [f64; DIM] {
        self.periods
    }

    #[inline]
    pub fn spacing(&self) -> [f64; DIM] {
        let n = self.n as f64;
        [
            self.periods[0] / n,
            self.periods[1] / n,
            self.periods[2] / n,
            self.periods[3] / n,
        ]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Coordinate volume of one cell, `h[0] h[1] h[2] h[3]`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear stride of each axis; axis 0 varies slowest.
    #[inline]
    pub fn strides(&self) -> [usize; DIM] {
        let n = self.n;
        [n * n * n, n * n, n, 1]
    }

    #[inline]
    pub fn index(&self, c: [usize; DIM]) -> usize {
        let n = self.n;
        ((c[0] * n + c[1]) * n + c[2]) * n + c[3]
    }

    /// Index of a point given signed (possibly out-of-range) coordinates.
    #[inline]
    pub fn index_wrapped(&self, c: [i64; DIM]) -> usize {
        let n = self.n as i64;
        let w = |x: i64| x.rem_euclid(n) as usize;
        self.index([w(c[0]), w(c[1]), w(c[2]), w(c[3])])
    }

    #[inline]
    pub fn coords(&self, mut idx: usize) -> [usize; DIM] {
        let n = self.n;
        let c3 = idx % n;
        idx /= n;
        let c2 = idx % n;
        idx /= n;
        let c1 = idx % n;
        idx /= n;
        [idx, c1, c2, c3]
    }

    /// Physical position of a grid point inside the fundamental domain.
    pub fn position(&self, idx: usize) -> [f64; DIM] {
        let c = self.coords(idx);
        let h = self.spacing();
        [
            c[0] as f64 * h[0],
            c[1] as f64 * h[1],
            c[2] as f64 * h[2],
            c[3] as f64 * h[3],
        ]
    }

    /// Reduce a continuous position into the fundamental domain `[0, L)`.
    pub fn wrap_position(&self, x: [f64; DIM]) -> [f64; DIM] {
        let mut out = x;
        for (o, l) in out.iter_mut().zip(self.periods.iter()) {
            *o = rem_euclid(*o, *l);
            if *o >= *l {
                *o = 0.0;
            }
        }
        out
    }

    /// Shortest coordinate displacement from `a` to `b` over all lattice shifts.
    pub fn min_image(&self, a: [f64; DIM], b: [f64; DIM]) -> [f64; DIM] {
        let mut d = [0.0; DIM];
        for k in 0..DIM {
            let l = self.periods[k];
            let mut v = rem_euclid(b[k] - a[k], l);
            if v > 0.5 * l {
                v -= l;
            }
            d[k] = v;
        }
        d
    }

    /// Wrapped index of `idx` moved by `offset` grid steps along `axis`.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: i64) -> usize {
        let n = self.n as i64;
        let s = self.strides()[axis];
        let c = ((idx / s) % self.n) as i64;
        let nc = (c + offset).rem_euclid(n) as usize;
        idx - (c as usize) * s + nc * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grid() {
        assert!(TorusGrid::unit(7).is_err());
        assert!(TorusGrid::new(8, [1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn index_roundtrip_and_wrap() {
        let g = TorusGrid::unit(8).unwrap();
        for idx in [0, 17, 511, 4095] {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
        assert_eq!(g.index_wrapped([-1, 0, 0, 8]), g.index([7, 0, 0, 0]));
        let i = g.index([7, 3, 0, 5]);
        assert_eq!(g.shift(i, 0, 1), g.index([0, 3, 0, 5]));
        assert_eq!(g.shift(i, 2, -2), g.index([7, 3, 6, 5]));
    }

    #[test]
    fn min_image_is_shortest_shift() {
        let g = TorusGrid::unit(8).unwrap();
        let d = g.min_image([0.9, 0.1, 0.0, 0.5], [0.1, 0.9, 0.0, 0.0]);
        assert!((d[0] - 0.2).abs() < 1e-12);
        assert!((d[1] + 0.2).abs() < 1e-12);
        assert!((d[3].abs() - 0.5).abs() < 1e-12);
    }
}
