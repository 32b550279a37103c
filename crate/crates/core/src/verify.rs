//! Inequality checks on single shapes, shape-family sweeps and grid
//! convergence studies, with JSON, CSV and text-table output.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{rate_check, run, FlowLaw, FlowSpec};
use crate::fmt17;
use crate::quermass::{quermass_from_geometry, s_k};
use crate::surface::{
    area, build_grid, compute_geometry, integrate, minkowski_residual, support_gradient_residual, GeometryFields,
    GridMode, RadialGraph, Resolution, ShapeSpec,
};
use crate::symfun::{gauss_bonnet_lk, Spectrum};
use crate::xi::{xi_parametric, xi_parametric_minkowski_sq, DEFAULT_KNOTS};

/// Default pass tolerance, relative to each row's scale.
pub const GAP_TOLERANCE: f64 = 1e-8;

/// Residuals below this are indistinguishable from rounding.
pub const SATURATION_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `A_k >= xi_{k,k-2}(A_{k-2})`.
    QuermassPair,
    /// `A_m >= xi_{m,-1}(A_{-1})`.
    VolumePair,
    /// `(int sigma_1)^2 >= xi(A_0^2)`.
    MinkowskiSq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Strict,
    /// `|gap|` within tolerance: the equality case up to quadrature noise.
    EqualityNumerical,
    Violated,
    /// Non-convex input; the gap is shown without a verdict.
    HypothesisViolated,
    DomainError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub name: String,
    pub family: Family,
    pub k: isize,
    pub l: isize,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub scale: f64,
    pub rel_gap: f64,
    pub status: RowStatus,
    /// `None` when no verdict applies.
    pub pass: Option<bool>,
}

/// `int L_k dmu` against `|Sigma|^{(n-2k)/n}`; reported without a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussBonnetRow {
    pub k: usize,
    pub integral: f64,
    pub area_power: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    /// Every computation here is deterministic; kept for report compatibility.
    pub seed: u64,
    pub gap_tolerance: f64,
    pub xi_knots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub id: String,
    pub shape: Option<ShapeSpec>,
    pub n: usize,
    pub mode: GridMode,
    pub resolution: Resolution,
    pub min_kappa: f64,
    pub convex: bool,
    pub rows: Vec<InequalityRow>,
    pub gauss_bonnet: Vec<GaussBonnetRow>,
    pub convergence: Option<ConvergenceStudy>,
    pub stamp: Stamp,
    /// Set when the experiment could not be evaluated at all.
    pub error: Option<String>,
}

impl VerificationReport {
    /// True when no row carries a failing verdict and the experiment ran.
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.rows.iter().all(|r| r.pass != Some(false))
    }

    pub fn row(&self, name: &str) -> Option<&InequalityRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per inequality row, same columns as the sweep CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        self.write_csv_rows(&mut out);
        out
    }

    fn write_csv_rows(&self, out: &mut String) {
        for row in &self.rows {
            let status = match &row.status {
                RowStatus::DomainError(_) => "domain_error".to_string(),
                s => serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            };
            let pass = row.pass.map_or("na".to_string(), |p| p.to_string());
            let family = serde_json::to_value(row.family).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:?},{},{},\"{}\",{family},{},{},{},{},{status},{pass}",
                self.id,
                self.n,
                self.mode,
                self.resolution.n_theta,
                self.resolution.n_phi,
                row.name,
                fmt17(row.lhs),
                fmt17(row.rhs),
                fmt17(row.gap),
                fmt17(row.rel_gap)
            )
            .unwrap();
        }
    }
}

const CSV_HEADER: &str = "id,n,mode,n_theta,n_phi,inequality,family,lhs,rhs,gap,rel_gap,status,pass\n";

fn classify(gap: f64, scale: f64, tol: f64, convex: bool) -> (RowStatus, Option<bool>) {
    if !convex {
        (RowStatus::HypothesisViolated, None)
    } else if gap.abs() <= tol * scale {
        (RowStatus::EqualityNumerical, Some(true))
    } else if gap > 0.0 {
        (RowStatus::Strict, Some(true))
    } else {
        (RowStatus::Violated, Some(false))
    }
}

/// Evaluates every inequality that applies in dimension `n` at the default
/// tolerance.
pub fn verify_inequalities(g: &RadialGraph) -> Result<VerificationReport> {
    verify_with_tolerance(g, GAP_TOLERANCE)
}

pub fn verify_with_tolerance(g: &RadialGraph, tol: f64) -> Result<VerificationReport> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("gap tolerance must be positive, got {tol}")));
    }
    let n = g.n();
    let fields = compute_geometry(g)?;
    let q = quermass_from_geometry(g, &fields)?;
    let min_kappa = fields.min_kappa();
    let convex = min_kappa > 0.0;

    let mut rows = Vec::new();
    let mut push = |name: String, family, k: isize, l: isize, lhs: f64, rhs: Result<f64>, scale: f64| {
        let row = match rhs {
            Ok(rhs) => {
                let gap = lhs - rhs;
                let (status, pass) = classify(gap, scale, tol, convex);
                InequalityRow { name, family, k, l, lhs, rhs, gap, scale, rel_gap: gap / scale, status, pass }
            }
            Err(e) => InequalityRow {
                name,
                family,
                k,
                l,
                lhs,
                rhs: f64::NAN,
                gap: f64::NAN,
                scale,
                rel_gap: f64::NAN,
                status: RowStatus::DomainError(e.to_string()),
                pass: if convex { Some(false) } else { None },
            },
        };
        rows.push(row);
    };

    for k in 1..n as isize {
        let rhs = xi_parametric(n, k, k - 2, DEFAULT_KNOTS).and_then(|xi| xi.eval(q.a(k - 2)));
        push(format!("A_{k} >= xi_{k},{}(A_{})", k - 2, k - 2), Family::QuermassPair, k, k - 2, q.a(k), rhs, s_k(n, k)?);
    }
    for m in 0..n as isize {
        let rhs = xi_parametric(n, m, -1, DEFAULT_KNOTS).and_then(|xi| xi.eval(q.volume()));
        push(format!("A_{m} >= xi_{m},-1(A_-1)"), Family::VolumePair, m, -1, q.a(m), rhs, s_k(n, m)?);
    }
    if n >= 2 {
        let h = integrate(&fields, &fields.sigma_field(1));
        let rhs = xi_parametric_minkowski_sq(n, DEFAULT_KNOTS).and_then(|xi| xi.eval(q.area().powi(2)));
        let scale = (n as f64 * s_k(n, 0)?).powi(2);
        push("(int H)^2 >= xi(A_0^2)".into(), Family::MinkowskiSq, 1, 0, h * h, rhs, scale);
    }

    Ok(VerificationReport {
        id: String::new(),
        shape: None,
        n,
        mode: g.grid().mode(),
        resolution: g.grid().resolution(),
        min_kappa,
        convex,
        rows,
        gauss_bonnet: gauss_bonnet_rows(&fields)?,
        convergence: None,
        stamp: Stamp { seed: 0, gap_tolerance: tol, xi_knots: DEFAULT_KNOTS },
        error: None,
    })
}

fn gauss_bonnet_rows(fields: &GeometryFields) -> Result<Vec<GaussBonnetRow>> {
    let n = fields.n();
    let a = area(fields);
    (1..=n / 2)
        .map(|k| {
            let lk = (0..fields.len())
                .map(|node| gauss_bonnet_lk(n, k, &Spectrum::new(fields.kappa(node))?))
                .collect::<Result<Vec<f64>>>()?;
            let integral = integrate(fields, &lk);
            let area_power = a.powf((n - 2 * k) as f64 / n as f64);
            Ok(GaussBonnetRow { k, integral, area_power, ratio: integral / area_power })
        })
        .collect()
}

/// Cartesian-product shape family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub n: Vec<usize>,
    pub mode: GridMode,
    /// Colatitude node counts; full2d grids use twice as many longitudes.
    pub resolutions: Vec<usize>,
    pub rho0: Vec<f64>,
    pub l: Vec<usize>,
    /// `eps = 0` gives the geodesic sphere.
    pub eps: Vec<f64>,
}

impl FamilySpec {
    fn experiments(&self) -> Vec<(String, usize, Resolution, ShapeSpec)> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &nt in &self.resolutions {
                let res = match self.mode {
                    GridMode::Full2d => Resolution::full2d(nt, 2 * nt),
                    GridMode::Axisym => Resolution::axisym(nt),
                };
                for &rho0 in &self.rho0 {
                    for &l in &self.l {
                        for &eps in &self.eps {
                            let shape = if eps == 0.0 {
                                ShapeSpec::Sphere { rho0 }
                            } else {
                                ShapeSpec::Perturbed { rho0, eps, l }
                            };
                            let id = format!("n{n}-{:?}{}x{}-{}", self.mode, res.n_theta, res.n_phi, shape.label())
                                .to_lowercase();
                            out.push((id, n, res, shape));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub experiments: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
    pub hypothesis_violated: usize,
    /// Smallest `gap / scale` over rows with a verdict.
    pub min_rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reports: Vec<VerificationReport>,
    pub summary: SweepSummary,
}

impl SweepReport {
    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0 && self.summary.errored == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        for r in &self.reports {
            r.write_csv_rows(&mut out);
        }
        out
    }

    /// Aligned text summary, one line per experiment.
    pub fn to_table(&self) -> String {
        let width = self.reports.iter().map(|r| r.id.len()).max().unwrap_or(2).max(10);
        let mut out = format!("{:<width$}  {:>6}  {:>12}  {:>12}  verdict\n", "experiment", "rows", "min rel gap", "min kappa");
        for r in &self.reports {
            let min_gap = r.rows.iter().map(|x| x.rel_gap).fold(f64::INFINITY, f64::min);
            let verdict = match (&r.error, r.convex, r.all_pass()) {
                (Some(_), _, _) => "error",
                (None, false, _) => "hypothesis violated",
                (None, true, true) => "pass",
                (None, true, false) => "FAIL",
            };
            writeln!(
                out,
                "{:<width$}  {:>6}  {:>12.4e}  {:>12.4e}  {verdict}",
                r.id,
                r.rows.len(),
                min_gap,
                r.min_kappa
            )
            .unwrap();
        }
        let s = &self.summary;
        writeln!(
            out,
            "{} experiments: {} passed, {} failed, {} errored, {} non-convex; min rel gap {:.4e}",
            s.experiments, s.passed, s.failed, s.errored, s.hypothesis_violated, s.min_rel_gap
        )
        .unwrap();
        out
    }
}

fn run_experiment(id: String, n: usize, mode: GridMode, res: Resolution, shape: ShapeSpec, tol: f64) -> VerificationReport {
    let result = build_grid(mode, n, res)
        .and_then(|grid| shape.build(&grid))
        .and_then(|g| verify_with_tolerance(&g, tol));
    match result {
        Ok(mut r) => {
            r.id = id;
            r.shape = Some(shape);
            r
        }
        Err(e) => VerificationReport {
            id,
            shape: Some(shape),
            n,
            mode,
            resolution: res,
            min_kappa: f64::NAN,
            convex: false,
            rows: Vec::new(),
            gauss_bonnet: Vec::new(),
            convergence: None,
            stamp: Stamp { seed: 0, gap_tolerance: tol, xi_knots: DEFAULT_KNOTS },
            error: Some(e.to_string()),
        },
    }
}

/// Runs every member of the family in parallel; reports keep the
/// family's enumeration order.
pub fn sweep(family: &FamilySpec) -> SweepReport {
    sweep_with_tolerance(family, GAP_TOLERANCE)
}

pub fn sweep_with_tolerance(family: &FamilySpec, tol: f64) -> SweepReport {
    let reports: Vec<VerificationReport> = family
        .experiments()
        .into_par_iter()
        .map(|(id, n, res, shape)| run_experiment(id, n, family.mode, res, shape, tol))
        .collect();
    let summary = SweepSummary {
        experiments: reports.len(),
        passed: reports.iter().filter(|r| r.error.is_none() && r.convex && r.all_pass()).count(),
        failed: reports.iter().filter(|r| r.error.is_none() && !r.all_pass()).count(),
        errored: reports.iter().filter(|r| r.error.is_some()).count(),
        hypothesis_violated: reports.iter().filter(|r| r.error.is_none() && !r.convex).count(),
        min_rel_gap: reports
            .iter()
            .flat_map(|r| r.rows.iter())
            .filter(|x| x.pass.is_some())
            .map(|x| x.rel_gap)
            .fold(f64::INFINITY, f64::min),
    };
    SweepReport { reports, summary }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvergenceCheck {
    /// Relative Minkowski-identity residual for index `k`.
    Minkowski { k: usize },
    SupportGradient,
    /// Largest relative evolution-identity mismatch over a short run of
    /// `steps` fixed steps of size `dt`.
    RateCheck { law: FlowLaw, k: usize, dt: f64, steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedOrder {
    Order(f64),
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub resolution: Resolution,
    pub spacing: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub check: ConvergenceCheck,
    pub rows: Vec<ConvergenceRow>,
    pub order: ObservedOrder,
}

impl ConvergenceStudy {
    pub fn order_value(&self) -> Option<f64> {
        match self.order {
            ObservedOrder::Order(p) => Some(p),
            ObservedOrder::Saturated => None,
        }
    }
}

fn residual(check: &ConvergenceCheck, g: &RadialGraph) -> Result<f64> {
    match check {
        ConvergenceCheck::Minkowski { k } => minkowski_residual(&compute_geometry(g)?, *k),
        ConvergenceCheck::SupportGradient => Ok(support_gradient_residual(&compute_geometry(g)?)),
        ConvergenceCheck::RateCheck { law, k, dt, steps } => {
            let mut spec = FlowSpec::new(*law, *k);
            spec.step.adaptive = false;
            spec.step.dt_init = *dt;
            spec.stop.t_max = *dt * *steps as f64;
            spec.stop.stationarity_tol = f64::MIN_POSITIVE;
            let trace = run(g.clone(), &spec, &[]).map_err(|f| f.error)?;
            Ok(rate_check(&trace)?.max_rel())
        }
    }
}

/// Least-squares slope of `ln residual` against `ln spacing`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs `check` on `shape` at each resolution and fits the observed order.
pub fn convergence_study(
    check: &ConvergenceCheck,
    shape: &ShapeSpec,
    mode: GridMode,
    n: usize,
    resolutions: &[Resolution],
) -> Result<ConvergenceStudy> {
    if resolutions.len() < 3 {
        return Err(Error::Precondition(format!(
            "a convergence study needs at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    let doubling = resolutions.windows(2).all(|w| {
        w[1].n_theta == 2 * w[0].n_theta && (mode == GridMode::Axisym || w[1].n_phi == 2 * w[0].n_phi)
    });
    if !doubling {
        return Err(Error::Precondition("each resolution must double the previous one".into()));
    }
    let rows = resolutions
        .iter()
        .map(|&res| {
            let grid = build_grid(mode, n, res)?;
            let g = shape.build(&grid)?;
            Ok(ConvergenceRow { resolution: res, spacing: grid.dtheta(), residual: residual(check, &g)?.abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = if rows.iter().any(|r| r.residual < SATURATION_FLOOR) {
        ObservedOrder::Saturated
    } else {
        let x: Vec<f64> = rows.iter().map(|r| r.spacing).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        ObservedOrder::Order(fitted_slope(&x, &y))
    };
    Ok(ConvergenceStudy { check: check.clone(), rows, order })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use super::*;

    #[test]
    fn spheres_are_equality_cases() {
        for n in 2..=4 {
            let grid = build_grid(GridMode::Axisym, n, Resolution::axisym(256)).unwrap();
            for rho in [0.4, FRAC_PI_4, 1.1] {
                let r = verify_inequalities(&ShapeSpec::Sphere { rho0: rho }.build(&grid).unwrap()).unwrap();
                assert!(r.convex && r.all_pass());
                for row in &r.rows {
                    assert_eq!(row.status, RowStatus::EqualityNumerical, "{} n={n} rho={rho}: {}", row.name, row.rel_gap);
                }
                assert_eq!(r.rows.len(), 2 * n);
            }
        }
    }

    #[test]
    fn perturbed_sphere_gaps_are_positive() {
        let grid = build_grid(GridMode::Full2d, 2, Resolution::full2d(64, 128)).unwrap();
        let g = perturbed_sphere_graph(&grid, 0.1);
        let r = verify_inequalities(&g).unwrap();
        assert!(r.rows.iter().all(|x| x.status == RowStatus::Strict), "{:?}", r.rows);
    }

    fn perturbed_sphere_graph(grid: &std::sync::Arc<crate::surface::RoundGrid>, eps: f64) -> RadialGraph {
        ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps, l: 2 }.build(grid).unwrap()
    }

    #[test]
    fn non_convex_rows_have_no_verdict() {
        let grid = build_grid(GridMode::Axisym, 2, Resolution::axisym(64)).unwrap();
        let g = ShapeSpec::Perturbed { rho0: 1.2, eps: 0.35, l: 2 }.build(&grid).unwrap();
        let r = verify_inequalities(&g).unwrap();
        assert!(!r.convex);
        assert!(r.rows.iter().all(|x| x.pass.is_none()));
        assert!(r.all_pass());
    }

    #[test]
    fn sweep_shape_and_order() {
        let empty = FamilySpec {
            n: vec![2],
            mode: GridMode::Axisym,
            resolutions: vec![64],
            rho0: vec![],
            l: vec![2],
            eps: vec![0.0],
        };
        let r = sweep(&empty);
        assert!(r.reports.is_empty());
        assert_eq!(r.summary.experiments, 0);

        let two = FamilySpec { rho0: vec![0.6], eps: vec![0.0, 0.05], ..empty };
        let r = sweep(&two);
        assert_eq!(r.reports.len(), 2);
        assert!(r.reports[0].id.contains("sphere") && r.reports[1].id.contains("eps=0.05"));
        assert_eq!(r.summary.passed, 2);
        assert_eq!(r.to_csv().lines().count(), 1 + 2 * 4);
        assert_eq!(r.to_json().unwrap(), sweep(&two).to_json().unwrap());
        assert!(r.to_table().contains("2 experiments: 2 passed"));
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let fam = FamilySpec {
            n: vec![2],
            mode: GridMode::Axisym,
            resolutions: vec![32],
            rho0: vec![1.5, 0.6],
            l: vec![2],
            eps: vec![0.2],
        };
        let r = sweep(&fam);
        assert_eq!(r.summary.errored, 1);
        assert!(r.reports[0].error.is_some());
        assert!(r.reports[1].error.is_none());
        assert!(!r.all_pass());
    }

    #[test]
    fn convergence_orders() {
        let shape = ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps: 0.05, l: 2 };
        let res: Vec<Resolution> = [64, 128, 256].iter().map(|&n| Resolution::axisym(n)).collect();
        let s = convergence_study(&ConvergenceCheck::Minkowski { k: 1 }, &shape, GridMode::Axisym, 3, &res).unwrap();
        let p = s.order_value().unwrap();
        assert!((1.8..=2.2).contains(&p), "{p}");

        let sphere = ShapeSpec::Sphere { rho0: 0.7 };
        let s = convergence_study(&ConvergenceCheck::SupportGradient, &sphere, GridMode::Axisym, 3, &res).unwrap();
        assert_eq!(s.order, ObservedOrder::Saturated);

        assert!(matches!(
            convergence_study(&ConvergenceCheck::SupportGradient, &shape, GridMode::Axisym, 3, &res[..1]),
            Err(Error::Precondition(_))
        ));
        let skip = [res[0], res[2], Resolution::axisym(512)];
        assert!(convergence_study(&ConvergenceCheck::SupportGradient, &shape, GridMode::Axisym, 3, &skip).is_err());
    }
}
