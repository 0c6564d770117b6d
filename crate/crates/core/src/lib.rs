//! Discrete L²-curvature gradient flow on periodic 4-tori.
//!
//! The crate is `no_std` with `alloc`; the `std` feature enables std support in
//! the dependencies and `parallel` evaluates pointwise kernels with rayon.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod curvature;
pub mod error;
pub mod field;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod metric;
pub mod norms;
pub mod par;

pub use curvature::{fk_scaling_check, CurvatureBundle};
pub use error::{Error, Result};
pub use field::Field;
pub use grid::TorusGrid;
pub use linalg::Sym4;
pub use metric::MetricField;
pub use norms::{lp_norm, sup_norm};

/// Builds the curvature bundle of `metric` with `∇^j Rm` up to `max_derivative_order`.
pub fn build_curvature(metric: &MetricField, max_derivative_order: usize) -> Result<CurvatureBundle> {
    CurvatureBundle::build(metric, max_derivative_order)
}
