//! Quermassintegrals of domains bounded by radial graphs, with geodesic-ball
//! closed forms.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::special::{binomial, sin_power_integral, unit_sphere_area};
use crate::surface::{area, compute_geometry, integrate, GeometryFields, RadialGraph};

/// `A_{-1}, A_0, ..., A_{n-1}` of one domain (ambient curvature `K = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuermassVector {
    n: usize,
    values: Vec<f64>,
}

impl QuermassVector {
    /// Assembles the vector from the enclosed volume and `int sigma_k` for
    /// `k = 0..n-1` by the recursion
    /// `A_1 = int sigma_1 + n Vol`, `A_k = int sigma_k + (n-k+1)/(k-1) A_{k-2}`.
    pub fn from_integrals(n: usize, volume: f64, sigma_integrals: &[f64]) -> Result<Self> {
        if n == 0 || sigma_integrals.len() != n {
            return Err(Error::Domain(format!(
                "need int sigma_k for k = 0..{} (got {} values)",
                n.saturating_sub(1),
                sigma_integrals.len()
            )));
        }
        let mut values = Vec::with_capacity(n + 1);
        values.push(volume);
        for (k, &ik) in sigma_integrals.iter().enumerate() {
            let a = match k {
                0 => ik,
                1 => ik + n as f64 * volume,
                _ => ik + (n - k + 1) as f64 / (k - 1) as f64 * values[k - 1],
            };
            values.push(a);
        }
        let q = Self { n, values };
        if let Some(k) = q.values.iter().position(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("non-finite quermassintegral A_{}", k as isize - 1)));
        }
        Ok(q)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `A_k` for `-1 <= k <= n-1`.
    pub fn get(&self, k: isize) -> Option<f64> {
        usize::try_from(k + 1).ok().and_then(|i| self.values.get(i).copied())
    }

    /// `A_k`; panics outside `-1..=n-1`.
    pub fn a(&self, k: isize) -> f64 {
        self.get(k)
            .unwrap_or_else(|| panic!("A_{k} is not defined for n = {}", self.n))
    }

    pub fn volume(&self) -> f64 {
        self.values[0]
    }

    pub fn area(&self) -> f64 {
        self.values[1]
    }

    /// Entries in index order `-1, 0, ..., n-1`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl Serialize for QuermassVector {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        struct Entries<'a>(&'a [f64]);
        impl Serialize for Entries<'_> {
            fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
                let mut m = ser.serialize_map(Some(self.0.len()))?;
                for (i, a) in self.0.iter().enumerate() {
                    m.serialize_entry(&(i as isize - 1).to_string(), a)?;
                }
                m.end()
            }
        }
        let mut m = ser.serialize_map(Some(3))?;
        m.serialize_entry("n", &self.n)?;
        m.serialize_entry("K", &1.0)?;
        m.serialize_entry("A", &Entries(&self.values))?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for QuermassVector {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            n: usize,
            #[serde(rename = "K")]
            k: f64,
            #[serde(rename = "A")]
            a: BTreeMap<String, f64>,
        }
        let raw = Raw::deserialize(de)?;
        if raw.k != 1.0 {
            return Err(D::Error::custom("only K = 1 is supported"));
        }
        let mut values = vec![f64::NAN; raw.n + 1];
        for (key, val) in raw.a {
            let k: isize = key.parse().map_err(|_| D::Error::custom(format!("bad index {key:?}")))?;
            let slot = usize::try_from(k + 1)
                .ok()
                .and_then(|i| values.get_mut(i))
                .ok_or_else(|| D::Error::custom(format!("index {k} outside -1..{}", raw.n as isize - 1)))?;
            *slot = val;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(D::Error::custom("missing quermassintegral entries"));
        }
        Ok(Self { n: raw.n, values })
    }
}

/// `int_{S^n} int_0^{rho(z)} sin^n r dr dz`.
pub fn enclosed_volume(g: &RadialGraph) -> f64 {
    let grid = g.grid();
    let n = grid.n();
    g.rho()
        .iter()
        .enumerate()
        .map(|(node, &r)| grid.weight(node) * sin_power_integral(n, r))
        .sum()
}

pub fn quermass_vector(g: &RadialGraph) -> Result<QuermassVector> {
    let f = compute_geometry(g)?;
    quermass_from_geometry(g, &f)
}

/// Quermassintegrals from already computed geometry of `g`.
pub fn quermass_from_geometry(g: &RadialGraph, f: &GeometryFields) -> Result<QuermassVector> {
    let n = g.n();
    let integrals: Vec<f64> = (0..n)
        .map(|k| if k == 0 { area(f) } else { integrate(f, &f.sigma_field(k)) })
        .collect();
    QuermassVector::from_integrals(n, enclosed_volume(g), &integrals)
}

fn check_sphere_args(n: usize, rho: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("dimension n must be at least 1".into()));
    }
    if !(rho > 0.0 && rho <= FRAC_PI_2) {
        return Err(Error::Domain(format!("geodesic ball radius {rho} outside (0, pi/2]")));
    }
    Ok(())
}

fn check_index(n: usize, k: isize) -> Result<()> {
    if k < -1 || k > n as isize - 1 {
        return Err(Error::Domain(format!("quermass index {k} outside -1..{}", n as isize - 1)));
    }
    Ok(())
}

/// `int sigma_k` over the geodesic sphere of radius `rho`:
/// `C(n,k) cos^k rho sin^{n-k} rho |S^n|`. Also valid at `rho = 0`.
pub fn sphere_sigma_integral(n: usize, rho: f64, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let (s, c) = rho.sin_cos();
    binomial(n, k) * c.powi(k as i32) * s.powi((n - k) as i32) * unit_sphere_area(n)
}

/// Enclosed volume of the geodesic ball of radius `rho` in `S^{n+1}`.
pub fn sphere_volume(n: usize, rho: f64) -> f64 {
    unit_sphere_area(n) * sin_power_integral(n, rho)
}

pub(crate) fn sphere_vector_unchecked(n: usize, rho: f64) -> QuermassVector {
    let integrals: Vec<f64> = (0..n).map(|k| sphere_sigma_integral(n, rho, k)).collect();
    QuermassVector::from_integrals(n, sphere_volume(n, rho), &integrals)
        .expect("closed forms are finite on [0, pi/2]")
}

/// All quermassintegrals of the geodesic ball `B_rho`.
pub fn sphere_quermass_vector(n: usize, rho: f64) -> Result<QuermassVector> {
    check_sphere_args(n, rho)?;
    Ok(sphere_vector_unchecked(n, rho))
}

/// `A_k(B_rho)` in closed form.
pub fn sphere_quermass(n: usize, rho: f64, k: isize) -> Result<f64> {
    check_sphere_args(n, rho)?;
    check_index(n, k)?;
    Ok(sphere_vector_unchecked(n, rho).a(k))
}

/// `d/d rho A_k(B_rho) = (k+1) int sigma_{k+1}`.
pub fn sphere_quermass_rate(n: usize, rho: f64, k: isize) -> Result<f64> {
    check_sphere_args(n, rho)?;
    check_index(n, k)?;
    Ok(sphere_rate_unchecked(n, rho, k))
}

pub(crate) fn sphere_rate_unchecked(n: usize, rho: f64, k: isize) -> f64 {
    let j = (k + 1) as usize;
    j.max(1) as f64 * sphere_sigma_integral(n, rho, j)
}

/// `s_k = A_k(B_{pi/2})`, the value at the equator.
pub fn s_k(n: usize, k: isize) -> Result<f64> {
    sphere_quermass(n, FRAC_PI_2, k)
}

/// `W_{k+1} = A_k / ((n+1) C(n,k))`.
pub fn wk_from_ak(n: usize, k: usize, a: f64) -> Result<f64> {
    if k >= n {
        return Err(Error::Domain(format!("W_(k+1) needs 0 <= k <= n-1, got k = {k}, n = {n}")));
    }
    Ok(a / ((n + 1) as f64 * binomial(n, k)))
}

/// Radius of the geodesic ball with `A_k(B_rho) = a`.
pub fn eta_k(n: usize, k: isize, a: f64) -> Result<f64> {
    check_index(n, k)?;
    let top = s_k(n, k)?;
    if !(a > 0.0 && a < top) {
        return Err(Error::Domain(format!("A_{k} = {a} outside (0, s_{k}) = (0, {top})")));
    }
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if sphere_vector_unchecked(n, mid).a(k) < a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
