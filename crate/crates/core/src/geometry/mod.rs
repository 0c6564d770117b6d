//! Metric geometry of a grid metric: distances and geodesics, the exponential
//! map, tubes around curves, ball volumes, an injectivity-radius heuristic,
//! normal charts and quasi-geodesic families along a flow.

pub mod chart;
pub mod curve;
pub mod distance;
pub mod evolution;
pub mod exp;
pub mod inj;
pub mod quadrature;
pub mod quasi;
pub mod sampler;
pub mod tube;
pub mod volume;

pub use chart::{gamma_norm, NormalChart};
pub use curve::Curve;
pub use distance::{all_pairs_distances, distance, geodesic, DistanceConfig, Geodesic};
pub use exp::{exp_map, log_map};
pub use inj::{inj_estimate, InjEstimate};
pub use quasi::{quasi_geodesic, Direction, QuasiGeodesicConfig, QuasiGeodesicFamily};
pub use sampler::MetricSampler;
pub use tube::{build_tube, coarea_residual, Tube, TubeConfig, TubeDiagnostics};
pub use volume::{ball_volume, diameter, noncollapsing_check, OMEGA_4};

/// A point of the torus in continuous coordinates, possibly outside the
/// fundamental domain (curves are stored unwrapped in the universal cover).
pub type Point = [f64; 4];

#[inline]
pub(crate) fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

#[inline]
pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

#[inline]
pub(crate) fn scale(a: &Point, c: f64) -> Point {
    [a[0] * c, a[1] * c, a[2] * c, a[3] * c]
}

#[inline]
pub(crate) fn axpy(a: &Point, c: f64, b: &Point) -> Point {
    [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]]
}

#[inline]
pub(crate) fn coord_norm(a: &Point) -> f64 {
    #[allow(unused_imports)]
    use num_traits::Float;
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt()
}
