//! Numerical laboratory around the L² curvature flow: scenario files, trace
//! storage, the verification suite and the `l2flow` command line.

pub mod checks;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod suite;

pub use error::{LabError, Result};
pub use scenario::Scenario;

/// Overrides the output directory of `run`.
pub const OUTPUT_DIR_ENV: &str = "L2FLOW_OUTPUT_DIR";
/// Caps the rayon worker count.
pub const THREADS_ENV: &str = "L2FLOW_THREADS";
