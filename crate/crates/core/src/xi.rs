//! Comparison functions `xi` relating two geodesic-ball quantities:
//! `target(B_rho) = xi(source(B_rho))`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quermass::{sphere_rate_unchecked, sphere_sigma_integral, sphere_vector_unchecked};
use crate::special::{unit_ball_volume, unit_sphere_area};

/// Default knot count of parametric tables.
pub const DEFAULT_KNOTS: usize = 2000;
/// Smallest accepted knot count.
pub const MIN_KNOTS: usize = 200;

/// A scalar functional evaluated on geodesic balls `B_rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereQuantity {
    /// `A_k` for `-1 <= k <= n-1`.
    Quermass(isize),
    /// `(int sigma_1)^2`.
    MeanCurvatureSq,
    /// `A_0^2`.
    AreaSq,
}

impl SphereQuantity {
    fn check(&self, n: usize) -> Result<()> {
        match *self {
            SphereQuantity::Quermass(k) if k < -1 || k > n as isize - 1 => Err(Error::Domain(format!(
                "quermass index {k} outside -1..{}",
                n as isize - 1
            ))),
            _ => Ok(()),
        }
    }

    /// Value on `B_rho`, `0 <= rho <= pi/2`.
    pub fn value(&self, n: usize, rho: f64) -> f64 {
        match *self {
            SphereQuantity::Quermass(k) => sphere_vector_unchecked(n, rho).a(k),
            SphereQuantity::MeanCurvatureSq => sphere_sigma_integral(n, rho, 1).powi(2),
            SphereQuantity::AreaSq => sphere_sigma_integral(n, rho, 0).powi(2),
        }
    }

    /// Derivative in `rho`.
    pub fn rate(&self, n: usize, rho: f64) -> f64 {
        let area = unit_sphere_area(n);
        let nf = n as f64;
        let (s, c) = rho.sin_cos();
        match *self {
            SphereQuantity::Quermass(k) => sphere_rate_unchecked(n, rho, k),
            SphereQuantity::MeanCurvatureSq => {
                let h = sphere_sigma_integral(n, rho, 1);
                let dh = nf * area * ((nf - 1.0) * c * c * s.powi(n as i32 - 2) - s.powi(n as i32));
                2.0 * h * dh
            }
            SphereQuantity::AreaSq => {
                let a = sphere_sigma_integral(n, rho, 0);
                2.0 * a * nf * area * s.powi(n as i32 - 1) * c
            }
        }
    }

    /// Whether the quantity is strictly increasing in `rho` on `(0, pi/2)`.
    pub fn is_increasing(&self) -> bool {
        !matches!(self, SphereQuantity::MeanCurvatureSq)
    }

    pub fn label(&self) -> String {
        match self {
            SphereQuantity::Quermass(k) => format!("A_{k}"),
            SphereQuantity::MeanCurvatureSq => "(int sigma_1)^2".into(),
            SphereQuantity::AreaSq => "A_0^2".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiKind {
    ClosedMinkowskiSq,
    Closed20,
    Parametric,
    Ode,
}

/// Knot table `rho_i -> (source, target, d source / d rho)` on a
/// Chebyshev-clustered grid of `[0, pi/2]`.
#[derive(Debug, Clone)]
struct ParamTable {
    rho: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    ds: Vec<f64>,
}

/// Hermite table in `t = ln s` for the integrated ODE.
#[derive(Debug, Clone)]
struct OdeTable {
    t: Vec<f64>,
    xi: Vec<f64>,
    dxi_dt: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Repr {
    ClosedMinkowskiSq,
    Closed20,
    Parametric(ParamTable),
    Ode(OdeTable),
}

/// An immutable comparison function with domain `(lo, hi]`.
#[derive(Debug, Clone)]
pub struct XiFunction {
    n: usize,
    target: SphereQuantity,
    source: SphereQuantity,
    lo: f64,
    hi: f64,
    repr: Repr,
}

fn omega_factor(n: usize) -> f64 {
    // (n+1)^{2/n} omega_{n+1}^{2/n} = s_0^{2/n}
    ((n + 1) as f64 * unit_ball_volume(n + 1)).powf(2.0 / n as f64)
}

/// Closed form for the squared Minkowski comparison,
/// `n^2 (n+1)^{2/n} omega_{n+1}^{2/n} s^{(n-1)/n} - n^2 s`, with `s = A_0^2`.
pub fn xi_closed_minkowski_sq(n: usize, s: f64) -> Result<f64> {
    let f = xi_closed_minkowski_sq_fn(n)?;
    f.eval(s)
}

/// Closed form `n(n-1)/2 (n+1)^{2/n} omega_{n+1}^{2/n} s^{(n-2)/n} - (n-1)/2 s`
/// for the `(2, 0)` comparison, `n >= 3`.
pub fn xi_closed_20(n: usize, s: f64) -> Result<f64> {
    let f = xi_closed_20_fn(n)?;
    f.eval(s)
}

pub fn xi_closed_minkowski_sq_fn(n: usize) -> Result<XiFunction> {
    if n < 2 {
        return Err(Error::Domain(format!("squared Minkowski comparison needs n >= 2, got {n}")));
    }
    let s0 = unit_sphere_area(n);
    Ok(XiFunction {
        n,
        target: SphereQuantity::MeanCurvatureSq,
        source: SphereQuantity::AreaSq,
        lo: 0.0,
        hi: s0 * s0,
        repr: Repr::ClosedMinkowskiSq,
    })
}

pub fn xi_closed_20_fn(n: usize) -> Result<XiFunction> {
    if n < 3 {
        return Err(Error::Domain(format!("closed form for xi_(2,0) needs n >= 3, got {n}")));
    }
    Ok(XiFunction {
        n,
        target: SphereQuantity::Quermass(2),
        source: SphereQuantity::Quermass(0),
        lo: 0.0,
        hi: unit_sphere_area(n),
        repr: Repr::Closed20,
    })
}

/// Parametric `xi_{k,l}` from the geodesic-ball closed forms,
/// `-1 <= l < k <= n-1`.
pub fn xi_parametric(n: usize, k: isize, l: isize, knots: usize) -> Result<XiFunction> {
    if !(-1 <= l && l < k && k < n as isize) {
        return Err(Error::Domain(format!("xi_({k},{l}) needs -1 <= l < k <= n-1 with n = {n}")));
    }
    XiFunction::parametric(n, SphereQuantity::Quermass(k), SphereQuantity::Quermass(l), knots)
}

/// Parametric form of the squared Minkowski comparison (`(int sigma_1)^2`
/// against `A_0^2`).
pub fn xi_parametric_minkowski_sq(n: usize, knots: usize) -> Result<XiFunction> {
    if n < 2 {
        return Err(Error::Domain(format!("squared Minkowski comparison needs n >= 2, got {n}")));
    }
    XiFunction::parametric(n, SphereQuantity::MeanCurvatureSq, SphereQuantity::AreaSq, knots)
}

/// `xi_{2,0}` obtained by integrating `xi' = ((n-2) xi - (n-1) s) / (n s)`
/// inward from its equator value `xi(s_0) = (n-1) s_0` down to
/// `s_0 * min_fraction`, using RK4 in `ln s`.
pub fn xi_ode_20(n: usize, steps: usize, min_fraction: f64) -> Result<XiFunction> {
    if n < 3 {
        return Err(Error::Domain(format!("xi_(2,0) needs n >= 3, got {n}")));
    }
    if !(min_fraction > 0.0 && min_fraction < 1.0) || steps < 10 {
        return Err(Error::Domain("ODE integration needs 0 < min_fraction < 1 and steps >= 10".into()));
    }
    let nf = n as f64;
    let s0 = unit_sphere_area(n);
    // d xi / dt with t = ln s
    let rhs = |t: f64, xi: f64| ((nf - 2.0) * xi - (nf - 1.0) * t.exp()) / nf;
    let t_hi = s0.ln();
    let t_lo = (s0 * min_fraction).ln();
    let h = (t_lo - t_hi) / steps as f64;
    let mut t = Vec::with_capacity(steps + 1);
    let mut xi = Vec::with_capacity(steps + 1);
    let mut dxi = Vec::with_capacity(steps + 1);
    let (mut tc, mut x) = (t_hi, (nf - 1.0) * s0);
    for i in 0..=steps {
        t.push(tc);
        xi.push(x);
        dxi.push(rhs(tc, x));
        if i == steps {
            break;
        }
        let k1 = rhs(tc, x);
        let k2 = rhs(tc + 0.5 * h, x + 0.5 * h * k1);
        let k3 = rhs(tc + 0.5 * h, x + 0.5 * h * k2);
        let k4 = rhs(tc + h, x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        tc = t_hi + (i + 1) as f64 * h;
    }
    t.reverse();
    xi.reverse();
    dxi.reverse();
    Ok(XiFunction {
        n,
        target: SphereQuantity::Quermass(2),
        source: SphereQuantity::Quermass(0),
        lo: t_lo.exp(),
        hi: s0,
        repr: Repr::Ode(OdeTable { t, xi, dxi_dt: dxi }),
    })
}

fn chebyshev_knots(count: usize) -> Vec<f64> {
    let m = (count - 1) as f64;
    (0..count)
        .map(|i| match i {
            0 => 0.0,
            _ if i == count - 1 => FRAC_PI_2,
            _ => FRAC_PI_4 * (1.0 - (PI * i as f64 / m).cos()),
        })
        .collect()
}

impl XiFunction {
    /// Parametric function `target(B_rho) = xi(source(B_rho))`; `source` must
    /// be strictly increasing in `rho`.
    pub fn parametric(n: usize, target: SphereQuantity, source: SphereQuantity, knots: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension n must be at least 1".into()));
        }
        target.check(n)?;
        source.check(n)?;
        if !source.is_increasing() {
            return Err(Error::Domain(format!("{} is not monotone in the radius", source.label())));
        }
        if knots < MIN_KNOTS {
            return Err(Error::Domain(format!("parametric tables need at least {MIN_KNOTS} knots, got {knots}")));
        }
        // knots where the source increment drops below rounding (the flat
        // approach to the equator) are skipped to keep abscissae strictly increasing
        let mut rho: Vec<f64> = Vec::with_capacity(knots);
        let mut s: Vec<f64> = Vec::with_capacity(knots);
        for r in chebyshev_knots(knots) {
            let v = source.value(n, r);
            if r == FRAC_PI_2 {
                while s.last().is_some_and(|&last| last >= v) {
                    s.pop();
                    rho.pop();
                }
            } else if s.last().is_some_and(|&last| last >= v) {
                continue;
            }
            rho.push(r);
            s.push(v);
        }
        if s.len() < MIN_KNOTS / 2 {
            return Err(Error::Domain(format!("{} is not strictly increasing on the knot grid", source.label())));
        }
        let y = rho.iter().map(|&r| target.value(n, r)).collect();
        let ds = rho.iter().map(|&r| source.rate(n, r)).collect();
        let hi = *s.last().expect("at least MIN_KNOTS knots");
        Ok(Self {
            n,
            target,
            source,
            lo: 0.0,
            hi,
            repr: Repr::Parametric(ParamTable { rho, s, y, ds }),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> XiKind {
        match self.repr {
            Repr::ClosedMinkowskiSq => XiKind::ClosedMinkowskiSq,
            Repr::Closed20 => XiKind::Closed20,
            Repr::Parametric(_) => XiKind::Parametric,
            Repr::Ode(_) => XiKind::Ode,
        }
    }

    pub fn target(&self) -> SphereQuantity {
        self.target
    }

    pub fn source(&self) -> SphereQuantity {
        self.source
    }

    /// `(k, l)` when both sides are quermassintegrals.
    pub fn indices(&self) -> Option<(isize, isize)> {
        match (self.target, self.source) {
            (SphereQuantity::Quermass(k), SphereQuantity::Quermass(l)) => Some((k, l)),
            _ => None,
        }
    }

    /// Domain `(lo, hi]`; `hi` is the source value at the equator.
    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if !(s > self.lo && s <= self.hi) {
            return Err(Error::Domain(format!(
                "xi argument {s} outside ({}, {}] for {} against {}",
                self.lo,
                self.hi,
                self.target.label(),
                self.source.label()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        let n = self.n as f64;
        Ok(match &self.repr {
            Repr::ClosedMinkowskiSq => n * n * omega_factor(self.n) * s.powf((n - 1.0) / n) - n * n * s,
            Repr::Closed20 => {
                n * (n - 1.0) / 2.0 * omega_factor(self.n) * s.powf((n - 2.0) / n) - (n - 1.0) / 2.0 * s
            }
            Repr::Parametric(tab) => match tab.s.binary_search_by(|x| x.total_cmp(&s)) {
                Ok(i) => tab.y[i],
                Err(_) => self.target.value(self.n, self.radius_unchecked(tab, s)),
            },
            Repr::Ode(tab) => tab.eval(s.ln()).0,
        })
    }

    /// `d xi / d s`.
    pub fn derivative(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        let n = self.n as f64;
        Ok(match &self.repr {
            Repr::ClosedMinkowskiSq => n * (n - 1.0) * omega_factor(self.n) * s.powf(-1.0 / n) - n * n,
            Repr::Closed20 => {
                (n - 1.0) * (n - 2.0) / 2.0 * omega_factor(self.n) * s.powf(-2.0 / n) - (n - 1.0) / 2.0
            }
            Repr::Parametric(tab) => {
                let r = self.radius_unchecked(tab, s);
                self.target.rate(self.n, r) / self.source.rate(self.n, r)
            }
            Repr::Ode(tab) => tab.eval(s.ln()).1 / s,
        })
    }

    /// Radius of the geodesic ball whose source value is `s` (parametric only).
    pub fn radius(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        match &self.repr {
            Repr::Parametric(tab) => Ok(self.radius_unchecked(tab, s)),
            _ => Err(Error::Domain("radius lookup needs a parametric comparison function".into())),
        }
    }

    /// Bracket from the knot table, monotone cubic guess for `rho(s)`, then
    /// safeguarded Newton on the closed-form source.
    fn radius_unchecked(&self, tab: &ParamTable, s: f64) -> f64 {
        let i = tab.s.partition_point(|&x| x < s).clamp(1, tab.s.len() - 1) - 1;
        let (mut a, mut b) = (tab.rho[i], tab.rho[i + 1]);
        if s == tab.s[i + 1] {
            return b;
        }
        let (s0, s1) = (tab.s[i], tab.s[i + 1]);
        let hs = s1 - s0;
        let x = (s - s0) / hs;
        let secant = (b - a) / hs;
        let limit = |d: f64| {
            let m = 1.0 / d;
            if m.is_finite() {
                m.min(3.0 * secant)
            } else {
                3.0 * secant
            }
        };
        let (m0, m1) = (limit(tab.ds[i]), limit(tab.ds[i + 1]));
        let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
        let h10 = x * (1.0 - x) * (1.0 - x);
        let h01 = x * x * (3.0 - 2.0 * x);
        let h11 = x * x * (x - 1.0);
        let mut r = (h00 * a + h10 * hs * m0 + h01 * b + h11 * hs * m1).clamp(a, b);
        for _ in 0..100 {
            let f = self.source.value(self.n, r) - s;
            if f == 0.0 {
                return r;
            }
            if f < 0.0 {
                a = r;
            } else {
                b = r;
            }
            let d = self.source.rate(self.n, r);
            let mut next = r - f / d;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - r).abs() <= 2.0 * f64::EPSILON * r || b - a <= 2.0 * f64::EPSILON * b {
                return next;
            }
            r = next;
        }
        r
    }

    /// Inverse on the range: the `s` with `xi(s) = y`, for increasing `xi`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        xi_inverse(self, y)
    }

    /// `(s, xi(s))` at `points` evenly spaced arguments in the open domain, as
    /// CSV with shortest round-trip decimals.
    pub fn dump_csv(&self, points: usize) -> Result<String> {
        let mut out = String::from("s,xi\n");
        for i in 1..=points {
            let s = self.lo + (self.hi - self.lo) * i as f64 / (points + 1) as f64;
            let y = self.eval(s)?;
            writeln!(out, "{},{}", crate::fmt17(s), crate::fmt17(y)).expect("writing to a String cannot fail");
        }
        Ok(out)
    }
}

impl OdeTable {
    /// Cubic Hermite value and `d xi / dt` at `t`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let i = self.t.partition_point(|&x| x < t).clamp(1, self.t.len() - 1) - 1;
        let h = self.t[i + 1] - self.t[i];
        let x = (t - self.t[i]) / h;
        let (y0, y1, d0, d1) = (self.xi[i], self.xi[i + 1], self.dxi_dt[i], self.dxi_dt[i + 1]);
        let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
        let h10 = x * (1.0 - x) * (1.0 - x);
        let h01 = x * x * (3.0 - 2.0 * x);
        let h11 = x * x * (x - 1.0);
        let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * x * x - 6.0 * x;
        let dh10 = 3.0 * x * x - 4.0 * x + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * x * x - 2.0 * x;
        let der = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        (val, der)
    }
}

/// The `s` with `f(s) = y`, by bisection (on the radius for parametric
/// functions, on `s` otherwise). Requires `f` increasing.
pub fn xi_inverse(f: &XiFunction, y: f64) -> Result<f64> {
    if let Repr::Parametric(_) = f.repr {
        if !f.target.is_increasing() {
            return Err(Error::Domain(format!("{} is not monotone; no inverse", f.target.label())));
        }
        let top = f.target.value(f.n, FRAC_PI_2);
        // values rounded just above the equator value belong to it
        let y = if y > top && y <= top * (1.0 + 8.0 * f64::EPSILON) { top } else { y };
        if !(y > f.target.value(f.n, 0.0) && y <= top) {
            return Err(Error::Domain(format!("{y} outside the range (0, {top}] of the comparison function")));
        }
        if y == top {
            return Ok(f.hi);
        }
        let (mut lo, mut hi) = (0.0, FRAC_PI_2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f.target.value(f.n, mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(f.source.value(f.n, 0.5 * (lo + hi)));
    }
    let (lo0, hi0) = f.domain();
    let lo_val = if lo0 > 0.0 { f.eval(lo0 * (1.0 + f64::EPSILON))? } else { f.eval(hi0 * 1e-300_f64.max(f64::MIN_POSITIVE))? };
    let hi_val = f.eval(hi0)?;
    if hi_val < lo_val {
        return Err(Error::Domain("comparison function is not increasing; no inverse".into()));
    }
    let y = if y > hi_val && y <= hi_val * (1.0 + 8.0 * f64::EPSILON) { hi_val } else { y };
    if !(y > lo_val && y <= hi_val) {
        return Err(Error::Domain(format!("{y} outside the range ({lo_val}, {hi_val}] of the comparison function")));
    }
    if y == hi_val {
        return Ok(hi0);
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f.eval(mid)? < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Residual of the recursion
/// `xi'_{k,k-2}(s) = (n-k)/(n-k+2) * (xi_{k,k-2}(s) - (n-k+1)/(k-1) s)
///                   / (s - (n-k+3)/(k-3) xi^{-1}_{k-2,k-4}(s))`
/// with `xi'` from a centred difference of step `1e-6 s`. `k >= 4`.
pub fn xi_ode_residual(n: usize, k: isize, xi_k: &XiFunction, xi_km2: &XiFunction, s: f64) -> Result<f64> {
    if k <= 3 {
        return Err(Error::UnsupportedFormula(format!(
            "the recursion divides by k - 3 and is not stated for k = {k}; only k >= 4 is checked"
        )));
    }
    if k > n as isize - 1 {
        return Err(Error::Domain(format!("k = {k} exceeds n - 1 = {}", n as isize - 1)));
    }
    if xi_k.indices() != Some((k, k - 2)) || xi_km2.indices() != Some((k - 2, k - 4)) {
        return Err(Error::Domain(format!("expected xi_({k},{}) and xi_({},{})", k - 2, k - 2, k - 4)));
    }
    let (nf, kf) = (n as f64, k as f64);
    let h = 1e-6 * s;
    let d = (xi_k.eval(s + h)? - xi_k.eval(s - h)?) / (2.0 * h);
    let num = xi_k.eval(s)? - (nf - kf + 1.0) / (kf - 1.0) * s;
    let den = s - (nf - kf + 3.0) / (kf - 3.0) * xi_inverse(xi_km2, s)?;
    Ok(d - (nf - kf) / (nf - kf + 2.0) * num / den)
}

/// Residual of `2 (n-1)/n xi(s) - (2n + 2 xi'(s)) s` for the squared
/// Minkowski comparison.
pub fn minkowski_sq_ode_residual(f: &XiFunction, s: f64) -> Result<f64> {
    let n = f.n() as f64;
    Ok(2.0 * (n - 1.0) / n * f.eval(s)? - (2.0 * n + 2.0 * f.derivative(s)?) * s)
}

/// Residual of `xi'(s) - ((n-2) xi(s) - (n-1) s) / (n s)` for `xi_{2,0}`.
pub fn xi20_ode_residual(f: &XiFunction, s: f64) -> Result<f64> {
    let n = f.n() as f64;
    Ok(f.derivative(s)? - ((n - 2.0) * f.eval(s)? - (n - 1.0) * s) / (n * s))
}
