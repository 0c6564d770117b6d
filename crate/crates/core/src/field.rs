//! Multi-component grid fields and the fourth-order centered stencils acting on them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{TorusGrid, DIM};

/// Fourth-order centered first derivative, offsets −2..=2, scaled by `1/h`.
pub const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

/// Fourth-order centered second derivative, offsets −2..=2, scaled by `1/h²`.
pub const D2: [f64; 5] = [
    -1.0 / 12.0,
    16.0 / 12.0,
    -30.0 / 12.0,
    16.0 / 12.0,
    -1.0 / 12.0,
];

/// Half-width of every stencil.
pub const RADIUS: usize = 2;

/// Unordered axis pairs `a < b` in the packed order used for mixed derivatives.
pub const AXIS_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// A field of `comps` doubles per grid point, stored point-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    comps: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &TorusGrid, comps: usize) -> Self {
        Self {
            grid: grid.clone(),
            comps,
            data: vec![0.0; grid.len() * comps],
        }
    }

    pub fn from_data(grid: &TorusGrid, comps: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * comps {
            return Err(Error::InvalidArgument(alloc::format!(
                "field data length {} does not match {} points x {} components",
                data.len(),
                grid.len(),
                comps
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            comps,
            data,
        })
    }

    /// Builds a field by evaluating `f(point_index, out)` at every point.
    pub fn from_fn<F>(grid: &TorusGrid, comps: usize, f: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let mut field = Self::zeros(grid, comps);
        crate::par::for_each_point(&mut field.data, comps, f);
        field
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn comps(&self) -> usize {
        self.comps
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.comps..(idx + 1) * self.comps]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize) -> &mut [f64] {
        let c = self.comps;
        &mut self.data[idx * c..(idx + 1) * c]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Partial derivative along `axis` of every component.
    pub fn partial(&self, axis: usize) -> Field {
        let h = self.grid.spacing()[axis];
        let comps = self.comps;
        Field::from_fn(&self.grid, comps, |idx, out| {
            let nb = Neighborhood::new(&self.grid, idx);
            first(&self.data, comps, &nb, axis, 1.0 / h, out);
        })
    }
}

/// Wrapped neighbour offsets of one grid point along each axis.
#[derive(Clone, Copy, Debug)]
pub struct Neighborhood {
    base: usize,
    delta: [[isize; 5]; DIM],
}

impl Neighborhood {
    #[inline]
    pub fn new(grid: &TorusGrid, idx: usize) -> Self {
        let n = grid.n() as isize;
        let c = grid.coords(idx);
        let s = grid.strides();
        let mut delta = [[0isize; 5]; DIM];
        for a in 0..DIM {
            let ca = c[a] as isize;
            for k in 0..5 {
                let w = (ca + k as isize - 2).rem_euclid(n);
                delta[a][k] = (w - ca) * s[a] as isize;
            }
        }
        Self { base: idx, delta }
    }

    #[inline]
    pub fn base(&self) -> usize {
        self.base
    }

    /// Point shifted by `k − 2` along `axis`.
    #[inline]
    pub fn at(&self, axis: usize, k: usize) -> usize {
        (self.base as isize + self.delta[axis][k]) as usize
    }

    /// Point shifted by `p − 2` along `a` and `q − 2` along `b` (`a != b`).
    #[inline]
    pub fn at2(&self, a: usize, p: usize, b: usize, q: usize) -> usize {
        (self.base as isize + self.delta[a][p] + self.delta[b][q]) as usize
    }
}

/// `out[c] = ∂_axis f_c` at the neighbourhood centre.
///
/// `comps` is the per-point stride of `data`; `out.len()` components are
/// produced, so a field's leading components can be differentiated alone.
///
/// Written in difference form so constants are annihilated exactly.
#[inline]
pub fn first(data: &[f64], comps: usize, nb: &Neighborhood, axis: usize, inv_h: f64, out: &mut [f64]) {
    let (m2, m1, p1, p2) = (
        nb.at(axis, 0) * comps,
        nb.at(axis, 1) * comps,
        nb.at(axis, 3) * comps,
        nb.at(axis, 4) * comps,
    );
    let w1 = D1[3] * inv_h;
    let w2 = D1[4] * inv_h;
    for c in 0..out.len() {
        out[c] = w1 * (data[p1 + c] - data[m1 + c]) + w2 * (data[p2 + c] - data[m2 + c]);
    }
}

/// `out[c] = ∂_axis ∂_axis f_c`.
#[inline]
pub fn second(data: &[f64], comps: usize, nb: &Neighborhood, axis: usize, inv_h2: f64, out: &mut [f64]) {
    let z = nb.base() * comps;
    let (m2, m1, p1, p2) = (
        nb.at(axis, 0) * comps,
        nb.at(axis, 1) * comps,
        nb.at(axis, 3) * comps,
        nb.at(axis, 4) * comps,
    );
    let w1 = D2[3] * inv_h2;
    let w2 = D2[4] * inv_h2;
    for c in 0..out.len() {
        let f0 = data[z + c];
        out[c] = w1 * ((data[p1 + c] - f0) + (data[m1 + c] - f0))
            + w2 * ((data[p2 + c] - f0) + (data[m2 + c] - f0));
    }
}

/// `out[c] = ∂_a ∂_b f_c` for `a != b`, as the tensor product of two first-derivative stencils.
#[inline]
pub fn mixed(
    data: &[f64],
    comps: usize,
    nb: &Neighborhood,
    a: usize,
    b: usize,
    inv_hab: f64,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    // pairs (+k, −k) along a, each differenced along b
    for (p_plus, p_minus) in [(3usize, 1usize), (4, 0)] {
        let wa = D1[p_plus] * inv_hab;
        for (q_plus, q_minus) in [(3usize, 1usize), (4, 0)] {
            let w = wa * D1[q_plus];
            let pp = nb.at2(a, p_plus, b, q_plus) * comps;
            let pm = nb.at2(a, p_plus, b, q_minus) * comps;
            let mp = nb.at2(a, p_minus, b, q_plus) * comps;
            let mm = nb.at2(a, p_minus, b, q_minus) * comps;
            for c in 0..out.len() {
                out[c] += w * ((data[pp + c] - data[pm + c]) - (data[mp + c] - data[mm + c]));
            }
        }
    }
}

/// Value, first and second partial derivatives of a field at one point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Vec<f64>,
    /// `first[a]` is `∂_a f`.
    pub first: [Vec<f64>; DIM],
    /// `second[a][b]` is `∂_a ∂_b f` (symmetric in `a, b`).
    pub second: [[Vec<f64>; DIM]; DIM],
}

/// Second-order jet of `field` at `idx`.
pub fn jet2(field: &Field, idx: usize) -> Jet {
    let comps = field.comps();
    let grid = field.grid();
    let h = grid.spacing();
    let nb = Neighborhood::new(grid, idx);
    let value = field.at(idx).to_vec();
    let mut first_d: [Vec<f64>; DIM] = core::array::from_fn(|_| vec![0.0; comps]);
    for (a, fa) in first_d.iter_mut().enumerate() {
        first(field.data(), comps, &nb, a, 1.0 / h[a], fa);
    }
    let mut second_d: [[Vec<f64>; DIM]; DIM] =
        core::array::from_fn(|_| core::array::from_fn(|_| vec![0.0; comps]));
    for a in 0..DIM {
        let mut buf = vec![0.0; comps];
        second(field.data(), comps, &nb, a, 1.0 / (h[a] * h[a]), &mut buf);
        second_d[a][a] = buf;
    }
    for &(a, b) in AXIS_PAIRS.iter() {
        let mut buf = vec![0.0; comps];
        mixed(field.data(), comps, &nb, a, b, 1.0 / (h[a] * h[b]), &mut buf);
        second_d[a][b] = buf.clone();
        second_d[b][a] = buf;
    }
    Jet {
        value,
        first: first_d,
        second: second_d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn stencils_reproduce_trig_derivatives_to_fourth_order() {
        let errs: Vec<f64> = [8usize, 16]
            .iter()
            .map(|&n| {
                let grid = TorusGrid::unit(n).unwrap();
                let f = Field::from_fn(&grid, 1, |idx, out| {
                    let x = grid.position(idx);
                    out[0] = (2.0 * PI * x[1]).sin() * (2.0 * PI * x[2]).cos();
                });
                let mut worst = 0.0_f64;
                for idx in 0..grid.len() {
                    let x = grid.position(idx);
                    let j = jet2(&f, idx);
                    let exact_d1 = 2.0 * PI * (2.0 * PI * x[1]).cos() * (2.0 * PI * x[2]).cos();
                    let exact_d12 = -4.0 * PI * PI * (2.0 * PI * x[1]).cos() * (2.0 * PI * x[2]).sin();
                    let exact_d11 = -4.0 * PI * PI * (2.0 * PI * x[1]).sin() * (2.0 * PI * x[2]).cos();
                    worst = worst
                        .max((j.first[1][0] - exact_d1).abs())
                        .max((j.second[1][2][0] - exact_d12).abs())
                        .max((j.second[1][1][0] - exact_d11).abs());
                    assert_eq!(j.first[0][0], 0.0);
                }
                worst
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }
}
