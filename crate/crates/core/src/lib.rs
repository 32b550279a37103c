//! Convex hypersurfaces of the open hemisphere as radial graphs: curvature
//! kernels, quermassintegrals, comparison functions, curvature flows and
//! inequality verification.

pub mod error;
pub mod special;
pub mod surface;
pub mod quermass;
pub mod symfun;
pub mod xi;
pub mod flow;
pub mod verify;
pub mod suite;

pub use error::{Error, Result};

/// Float formatting used by every text output: 17 significant digits, which
/// round-trips any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
