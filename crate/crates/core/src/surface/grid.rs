use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{sin_power_integral, unit_sphere_area};

/// Minimum node count per angular dimension.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Colatitude-longitude grid on `S^2` (n = 2 only).
    Full2d,
    /// Polar-angle profile on `S^n` for rotationally symmetric fields.
    Axisym,
}

/// Node counts. `n_phi` is 1 for axisymmetric grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub n_theta: usize,
    #[serde(default = "one")]
    pub n_phi: usize,
}

fn one() -> usize {
    1
}

impl Resolution {
    pub fn axisym(n_theta: usize) -> Self {
        Self { n_theta, n_phi: 1 }
    }

    pub fn full2d(n_theta: usize, n_phi: usize) -> Self {
        Self { n_theta, n_phi }
    }

    pub fn nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }
}

/// Cell-centred discretization of the round sphere `S^n`.
///
/// Colatitude nodes sit at `theta_i = (i + 1/2) * pi / n_theta`, so no node
/// lies on a pole. Each node carries the exact round-metric measure of its
/// cell, hence the weights sum to `|S^n|` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundGrid {
    mode: GridMode,
    n: usize,
    res: Resolution,
    theta: Vec<f64>,
    row_weight: Vec<f64>,
    dtheta: f64,
    dphi: f64,
}

impl RoundGrid {
    pub fn new(mode: GridMode, n: usize, res: Resolution) -> Result<Self> {
        match mode {
            GridMode::Full2d => {
                if n != 2 {
                    return Err(Error::UnsupportedGrid(format!("full2d requires n = 2, got n = {n}")));
                }
                if res.n_theta < MIN_RESOLUTION || res.n_phi < MIN_RESOLUTION {
                    return Err(Error::UnsupportedGrid(format!(
                        "full2d needs at least {MIN_RESOLUTION} nodes per direction, got {}x{}",
                        res.n_theta, res.n_phi
                    )));
                }
                if !res.n_phi.is_multiple_of(2) {
                    return Err(Error::UnsupportedGrid(
                        "full2d needs an even longitude count for the pole reflection".into(),
                    ));
                }
            }
            GridMode::Axisym => {
                if n == 0 {
                    return Err(Error::UnsupportedGrid("axisym requires n >= 1".into()));
                }
                if res.n_theta < MIN_RESOLUTION {
                    return Err(Error::UnsupportedGrid(format!(
                        "axisym needs at least {MIN_RESOLUTION} nodes, got {}",
                        res.n_theta
                    )));
                }
                if res.n_phi != 1 {
                    return Err(Error::UnsupportedGrid("axisym grids have n_phi = 1".into()));
                }
            }
        }
        let nt = res.n_theta;
        let dtheta = PI / nt as f64;
        let dphi = 2.0 * PI / res.n_phi as f64;
        let theta = (0..nt).map(|i| (i as f64 + 0.5) * dtheta).collect();
        // int sin^{n-1} over the cell, times the measure of the orbit direction(s)
        let orbit = match mode {
            GridMode::Full2d => dphi,
            GridMode::Axisym => unit_sphere_area(n - 1),
        };
        let row_weight = (0..nt)
            .map(|i| {
                let a = i as f64 * dtheta;
                let b = (i + 1) as f64 * dtheta;
                orbit * (sin_power_integral(n - 1, b) - sin_power_integral(n - 1, a))
            })
            .collect();
        Ok(Self {
            mode,
            n,
            res,
            theta,
            row_weight,
            dtheta,
            dphi,
        })
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn len(&self) -> usize {
        self.res.nodes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_theta(&self) -> usize {
        self.res.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.res.n_phi
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn dphi(&self) -> f64 {
        self.dphi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Colatitude and longitude of a node.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = (node / self.res.n_phi, node % self.res.n_phi);
        (self.theta[i], j as f64 * self.dphi)
    }

    /// Round-metric quadrature weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        self.row_weight[node / self.res.n_phi]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Node index for possibly out-of-range `(i, j)`; rows beyond a pole are
    /// reflected through it, which shifts the longitude by half a turn.
    #[inline]
    pub(crate) fn wrap(&self, i: isize, j: isize) -> usize {
        let nt = self.res.n_theta as isize;
        let np = self.res.n_phi as isize;
        let (i, j) = if i < 0 {
            (-1 - i, j + np / 2)
        } else if i >= nt {
            (2 * nt - 1 - i, j + np / 2)
        } else {
            (i, j)
        };
        (i * np + j.rem_euclid(np)) as usize
    }

    /// Largest eigenvalue bound of the discrete second-derivative operator,
    /// used for explicit time-step control.
    pub(crate) fn stiffness(&self) -> f64 {
        let ht2 = self.dtheta * self.dtheta;
        match self.mode {
            GridMode::Axisym => 4.0 * self.n as f64 / ht2,
            GridMode::Full2d => {
                let s0 = self.theta[0].sin();
                let hp2 = 2.0 * (1.0 - self.dphi.cos());
                6.0 / ht2 + 4.0 / (s0 * s0 * hp2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sphere_area() {
        let g = RoundGrid::new(GridMode::Full2d, 2, Resolution::full2d(64, 128)).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 4.0 * PI).abs() <= 1e-10 * 4.0 * PI);

        let g = RoundGrid::new(GridMode::Axisym, 3, Resolution::axisym(512)).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 2.0 * PI * PI).abs() <= 1e-12 * 2.0 * PI * PI);

        let g = RoundGrid::new(GridMode::Axisym, 2, Resolution::axisym(256)).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 4.0 * PI).abs() <= 1e-12 * 4.0 * PI);

        for n in 1..8 {
            let g = RoundGrid::new(GridMode::Axisym, n, Resolution::axisym(100)).unwrap();
            let s: f64 = g.weights().iter().sum();
            let area = unit_sphere_area(n);
            assert!((s - area).abs() <= 1e-12 * area, "n = {n}");
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn rejects_unsupported_combinations() {
        assert!(RoundGrid::new(GridMode::Full2d, 3, Resolution::full2d(32, 64)).is_err());
        assert!(RoundGrid::new(GridMode::Full2d, 2, Resolution::full2d(8, 64)).is_err());
        assert!(RoundGrid::new(GridMode::Full2d, 2, Resolution::full2d(32, 33)).is_err());
        assert!(RoundGrid::new(GridMode::Axisym, 0, Resolution::axisym(32)).is_err());
        assert!(RoundGrid::new(GridMode::Axisym, 3, Resolution::axisym(15)).is_err());
    }

    #[test]
    fn nodes_avoid_poles_and_reflect() {
        let g = RoundGrid::new(GridMode::Full2d, 2, Resolution::full2d(16, 32)).unwrap();
        assert!(g.theta()[0] > 0.0 && *g.theta().last().unwrap() < PI);
        assert_eq!(g.wrap(-1, 0), g.wrap(0, 16));
        assert_eq!(g.wrap(16, 3), g.wrap(15, 19));
        assert_eq!(g.wrap(2, -1), g.wrap(2, 31));
    }
}
