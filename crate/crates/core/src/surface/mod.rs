//! Round-sphere grids, radial graphs over them, and their pointwise geometry.

mod geometry;
mod graph;
mod grid;

pub use geometry::{
    area, compute_geometry, integrate, minkowski_residual, minkowski_sides, support_gradient_residual,
    GeometryFields,
};
pub(crate) use geometry::{conformal_flux_divergence, par_map};
pub use graph::{geodesic_sphere, harmonic_perturbation, perturbed_sphere, GraphRecord, Harmonic, RadialGraph, ShapeSpec};
pub(crate) use graph::check_range;
pub use grid::{GridMode, Resolution, RoundGrid, MIN_RESOLUTION};

use std::sync::Arc;

use crate::error::Result;

/// Builds a shared grid.
pub fn build_grid(mode: GridMode, n: usize, resolution: Resolution) -> Result<Arc<RoundGrid>> {
    Ok(Arc::new(RoundGrid::new(mode, n, resolution)?))
}
