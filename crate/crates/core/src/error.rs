use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid needs at least {min} points per axis, got {n}")]
    GridTooSmall { n: usize, min: usize },

    #[error("grid periods must be positive and finite")]
    InvalidPeriod,

    #[error("metric is not positive definite at grid point {index} (coords {coords:?})")]
    NotPositiveDefinite { index: usize, coords: [usize; 4] },

    #[error("metric component is not finite at grid point {index}")]
    NonFiniteMetric { index: usize },

    #[error("covariant derivative order {requested} exceeds the supported maximum {max}")]
    DerivativeOrder { requested: usize, max: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("L^p norm needs p >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("sign of the divergence operator has not been calibrated")]
    UncalibratedSign,

    #[error("non-finite gradient probe at grid point {index}, component {component}")]
    NonFiniteProbe { index: usize, component: usize },

    #[error("positive definiteness lost at grid point {index} (coords {coords:?}) at t = {t}")]
    PositivityLost {
        index: usize,
        coords: [usize; 4],
        t: f64,
    },

    #[error("energy increased after {retries} step-size halvings at t = {t}")]
    EnergyIncrease { retries: usize, t: f64 },

    #[error("interval length underflow in quasi-geodesic construction (A = {a})")]
    IntervalUnderflow { a: f64 },

    #[error("curve violates the tube hypothesis `{bound}`: {value} > {limit}")]
    TubeHypothesis {
        bound: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("normal chart construction failed at {point:?}")]
    ChartFailure { point: [f64; 4] },

    #[error("degenerate time grid: {0}")]
    DegenerateTimeGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
