//! Gauss–Legendre and product rules on balls and spheres.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x.push(z);
        w.push(2.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w.iter()).map(|(&xi, &wi)| (c + r * xi, r * wi)).collect()
}

/// Unit directions and weights on `S²` (total weight `4π`), from `n`
/// Gauss points in `cos θ` and `2n` equally spaced azimuths.
pub fn sphere2(n: usize) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::with_capacity(2 * n * n);
    for (z, wz) in gauss_interval(n, -1.0, 1.0) {
        let s = (1.0 - z * z).max(0.0).sqrt();
        for k in 0..2 * n {
            let phi = PI * (k as f64 + 0.5) / n as f64;
            out.push(([s * phi.cos(), s * phi.sin(), z], wz * PI / n as f64));
        }
    }
    out
}

/// Unit directions and weights on `S³` (total weight `2π²`) in Hopf
/// coordinates `(cos η e^{iφ₁}, sin η e^{iφ₂})`. With `u = sin²η` the volume
/// element is `½ du dφ₁ dφ₂`, so polynomials are integrated exactly up to
/// degree `2n − 1`.
pub fn sphere3(n: usize) -> Vec<([f64; 4], f64)> {
    let m = 2 * n;
    let dphi = 2.0 * PI / m as f64;
    let mut out = Vec::with_capacity(n * m * m);
    for (u, wu) in gauss_interval(n, 0.0, 1.0) {
        let (c, s) = ((1.0 - u).sqrt(), u.sqrt());
        for i in 0..m {
            let p1 = (i as f64 + 0.5) * dphi;
            for j in 0..m {
                let p2 = (j as f64 + 0.5) * dphi;
                let w = 0.5 * wu * dphi * dphi;
                out.push(([c * p1.cos(), c * p1.sin(), s * p2.cos(), s * p2.sin()], w));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn sphere_rules_have_the_right_measure() {
        let a2: f64 = sphere2(4).iter().map(|(_, w)| w).sum();
        assert!((a2 - 4.0 * PI).abs() < 1e-12);
        let a3: f64 = sphere3(4).iter().map(|(_, w)| w).sum();
        assert!((a3 - 2.0 * PI * PI).abs() < 1e-12);
        // ∫ x_i² = π²/2 and ∫ x_i⁴ = π²/4 over S³.
        for i in 0..4 {
            let m2: f64 = sphere3(3).iter().map(|(d, w)| w * d[i] * d[i]).sum();
            let m4: f64 = sphere3(3).iter().map(|(d, w)| w * d[i].powi(4)).sum();
            assert!((m2 - PI * PI / 2.0).abs() < 1e-12);
            assert!((m4 - PI * PI / 4.0).abs() < 1e-12);
        }
    }
}
