use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{GridMode, Resolution, RoundGrid};
use crate::error::{Error, Result};
use crate::special::{associated_legendre, legendre};

/// A star-shaped hypersurface `{ (rho(z), z) : z in S^n }` of the open
/// hemisphere, sampled on a [`RoundGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGraph {
    grid: Arc<RoundGrid>,
    rho: Vec<f64>,
}

impl RadialGraph {
    /// Wraps a radius field, checking `0 < rho < pi/2` at every node.
    pub fn new(grid: Arc<RoundGrid>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::Domain(format!(
                "radius field has {} values for a grid of {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        check_range(&rho)?;
        Ok(Self { grid, rho })
    }

    pub fn grid(&self) -> &Arc<RoundGrid> {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            mode: self.grid.mode(),
            n: self.grid.n(),
            resolution: self.grid.resolution(),
            rho: self.rho.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: GraphRecord = serde_json::from_str(text)?;
        rec.into_graph()
    }
}

pub(crate) fn check_range(rho: &[f64]) -> Result<()> {
    for (node, &r) in rho.iter().enumerate() {
        if !(r.is_finite() && r > 0.0 && r < FRAC_PI_2) {
            return Err(Error::RadiusOutOfRange { node, rho: r });
        }
    }
    Ok(())
}

/// Flat serialized form of a [`RadialGraph`].
///
/// Floats are written in shortest round-trip form, so a record read back
/// reproduces the radius field bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub mode: GridMode,
    pub n: usize,
    pub resolution: Resolution,
    pub rho: Vec<f64>,
}

impl GraphRecord {
    pub fn into_graph(self) -> Result<RadialGraph> {
        let grid = Arc::new(RoundGrid::new(self.mode, self.n, self.resolution)?);
        RadialGraph::new(grid, self.rho)
    }
}

/// The geodesic sphere `rho = rho0` about the origin.
pub fn geodesic_sphere(grid: &Arc<RoundGrid>, rho0: f64) -> Result<RadialGraph> {
    if !(rho0 > 0.0 && rho0 < FRAC_PI_2) {
        return Err(Error::Domain(format!("sphere radius {rho0} outside (0, pi/2)")));
    }
    RadialGraph::new(grid.clone(), vec![rho0; grid.len()])
}

/// `rho = rho0 + eps * P_l(cos theta)`.
///
/// Convexity is not checked here.
pub fn perturbed_sphere(grid: &Arc<RoundGrid>, rho0: f64, eps: f64, l: usize) -> Result<RadialGraph> {
    if l == 0 {
        return Err(Error::Domain("perturbation mode must be l >= 1".into()));
    }
    harmonic_perturbation(grid, rho0, &[Harmonic { l, m: 0, amplitude: eps }])
}

/// One real spherical-harmonic term `amplitude * P_l^m(cos theta) cos(m phi)`,
/// scaled so that its maximum modulus on the sphere is `|amplitude|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub l: usize,
    #[serde(default)]
    pub m: usize,
    pub amplitude: f64,
}

impl Harmonic {
    fn eval(&self, theta: f64, phi: f64) -> f64 {
        if self.m == 0 {
            return self.amplitude * legendre(self.l, theta.cos());
        }
        let peak = harmonic_peak(self.l, self.m);
        self.amplitude * associated_legendre(self.l, self.m, theta.cos()) * (self.m as f64 * phi).cos() / peak
    }
}

fn harmonic_peak(l: usize, m: usize) -> f64 {
    (0..=4000)
        .map(|i| associated_legendre(l, m, -1.0 + 2.0 * i as f64 / 4000.0).abs())
        .fold(0.0, f64::max)
}

/// `rho = rho0 + sum of harmonic terms`. Non-zonal terms (`m > 0`) need a
/// full2d grid.
pub fn harmonic_perturbation(grid: &Arc<RoundGrid>, rho0: f64, terms: &[Harmonic]) -> Result<RadialGraph> {
    if !(rho0 > 0.0 && rho0 < FRAC_PI_2) {
        return Err(Error::Domain(format!("base radius {rho0} outside (0, pi/2)")));
    }
    if grid.mode() == GridMode::Axisym && terms.iter().any(|h| h.m != 0) {
        return Err(Error::Domain("axisymmetric grids only carry zonal (m = 0) harmonics".into()));
    }
    if let Some(h) = terms.iter().find(|h| h.m > h.l) {
        return Err(Error::Domain(format!("harmonic order m = {} exceeds degree l = {}", h.m, h.l)));
    }
    let rho = (0..grid.len())
        .map(|node| {
            let (theta, phi) = grid.coords(node);
            rho0 + terms.iter().map(|h| h.eval(theta, phi)).sum::<f64>()
        })
        .collect();
    RadialGraph::new(grid.clone(), rho)
}

/// Serializable description of a shape family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere { rho0: f64 },
    /// `rho0 + eps * P_l(cos theta)`.
    Perturbed { rho0: f64, eps: f64, l: usize },
    Harmonics { rho0: f64, terms: Vec<Harmonic> },
}

impl ShapeSpec {
    pub fn build(&self, grid: &Arc<RoundGrid>) -> Result<RadialGraph> {
        match self {
            ShapeSpec::Sphere { rho0 } => geodesic_sphere(grid, *rho0),
            ShapeSpec::Perturbed { rho0, eps, l } => perturbed_sphere(grid, *rho0, *eps, *l),
            ShapeSpec::Harmonics { rho0, terms } => harmonic_perturbation(grid, *rho0, terms),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ShapeSpec::Sphere { rho0 } => format!("sphere(rho0={rho0})"),
            ShapeSpec::Perturbed { rho0, eps, l } => format!("perturbed(rho0={rho0},eps={eps},l={l})"),
            ShapeSpec::Harmonics { rho0, terms } => {
                let t: Vec<String> = terms.iter().map(|h| format!("{}:{}:{}", h.l, h.m, h.amplitude)).collect();
                format!("harmonics(rho0={rho0},{})", t.join(";"))
            }
        }
    }
}
