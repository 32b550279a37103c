//! The acceptance battery. Each criterion runs a fixed set of checks and
//! reports one verdict; the test target and the command-line `suite` share
//! this code.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, FRAC_PI_8, LN_2};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{run, FlowLaw, FlowSpec, MonitorKind, StopReason};
use crate::quermass::{quermass_from_geometry, quermass_vector, sphere_quermass};
use crate::surface::{
    build_grid, compute_geometry, geodesic_sphere, integrate, minkowski_sides, GridMode, Harmonic, Resolution,
    ShapeSpec,
};
use crate::verify::{
    convergence_study, fitted_slope, sweep_with_tolerance, verify_with_tolerance, ConvergenceCheck, FamilySpec,
    ObservedOrder, RowStatus, GAP_TOLERANCE,
};
use crate::xi::{
    minkowski_sq_ode_residual, xi20_ode_residual, xi_closed_20, xi_closed_20_fn, xi_closed_minkowski_sq,
    xi_closed_minkowski_sq_fn, xi_ode_20, xi_ode_residual, xi_parametric, XiFunction, DEFAULT_KNOTS,
};

/// Identifiers of every criterion, in run order.
pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteOptions {
    /// Multiplies every pass tolerance; values below 1 tighten the battery.
    pub tolerance_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { tolerance_scale: 1.0 }
    }
}

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub limit: f64,
    pub pass: bool,
    /// Checks that only document behaviour do not affect the verdict.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; `None` once stripped for reproducible output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
    pub budget_s: f64,
}

impl CriterionOutcome {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.gating && !c.pass)
    }

    /// One-line verdict.
    pub fn summary_line(&self) -> String {
        let gating = self.checks.iter().filter(|c| c.gating).count();
        let failed = self.failed_checks().count();
        let time = match self.elapsed_s {
            Some(t) => format!("{t:.1} s of {:.0} s budget", self.budget_s),
            None => format!("{:.0} s budget", self.budget_s),
        };
        format!(
            "criterion {:>2} {}  {}  [{}/{} checks passed, {time}]",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            gating - failed,
            gating,
        )
    }

    /// Summary line followed by failing checks, notes and (when `verbose`)
    /// every check.
    pub fn describe(&self, verbose: bool) -> String {
        let mut out = self.summary_line();
        for c in &self.checks {
            if verbose || (c.gating && !c.pass) {
                let tag = match (c.gating, c.pass) {
                    (false, _) => "info",
                    (true, true) => "ok",
                    (true, false) => "FAIL",
                };
                write!(out, "\n    {tag:<4} {}: {:.3e}", c.label, c.measured).unwrap();
                if !c.limit.is_nan() {
                    write!(out, " (limit {:.3e})", c.limit).unwrap();
                }
            }
        }
        for n in &self.notes {
            write!(out, "\n    note: {n}").unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub options: SuiteOptions,
    pub criteria: Vec<CriterionOutcome>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    /// Drops wall-clock times so equal runs serialize identically.
    pub fn strip_timings(&mut self) {
        for c in &mut self.criteria {
            c.elapsed_s = None;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self, verbose: bool) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            writeln!(out, "{}", c.describe(verbose)).unwrap();
        }
        let passed = self.criteria.iter().filter(|c| c.pass).count();
        writeln!(out, "{passed}/{} criteria passed", self.criteria.len()).unwrap();
        out
    }
}

/// Title and runtime budget in seconds.
pub fn describe_criterion(id: u8) -> Option<(&'static str, f64)> {
    Some(match id {
        1 => ("sphere oracle exactness", 30.0),
        2 => ("closed-form comparison identities", 1.0),
        3 => ("triple agreement for xi_2,0", 30.0),
        4 => ("quermass recursion for xi_k,k-2", 60.0),
        5 => ("Minkowski identity and convergence order", 120.0),
        6 => ("sphere flow reduces to its scalar ODE", 60.0),
        7 => ("Q-monotonicity along Gerhardt runs", 300.0),
        8 => ("volume-preserving flow conservation", 180.0),
        9 => ("inequality gaps and second-order rigidity", 300.0),
        10 => ("full2d versus axisym cross-check", 30.0),
        _ => return None,
    })
}

/// Runs one criterion; `None` for an unknown id.
pub fn run_criterion(id: u8, opts: &SuiteOptions) -> Option<CriterionOutcome> {
    let (title, budget_s) = describe_criterion(id)?;
    let mut ctx = Ctx { scale: opts.tolerance_scale, checks: Vec::new(), notes: Vec::new() };
    let start = Instant::now();
    let body: fn(&mut Ctx) -> Result<()> = match id {
        1 => sphere_oracle,
        2 => closed_form_identities,
        3 => triple_agreement,
        4 => recursion,
        5 => minkowski,
        6 => sphere_flow,
        7 => q_monotonicity,
        8 => cgls0_conservation,
        9 => rigidity,
        10 => cross_check,
        _ => unreachable!(),
    };
    if let Err(e) = body(&mut ctx) {
        ctx.checks.push(Check {
            label: format!("aborted: {e}"),
            measured: f64::NAN,
            limit: f64::NAN,
            pass: false,
            gating: true,
        });
    }
    let pass = ctx.checks.iter().all(|c| !c.gating || c.pass);
    Some(CriterionOutcome {
        id,
        title: title.into(),
        pass,
        checks: ctx.checks,
        notes: ctx.notes,
        elapsed_s: Some(start.elapsed().as_secs_f64()),
        budget_s,
    })
}

/// Runs the listed criteria in order; unknown ids are skipped.
pub fn run_suite(ids: &[u8], opts: &SuiteOptions) -> SuiteReport {
    SuiteReport {
        options: *opts,
        criteria: ids.iter().filter_map(|&id| run_criterion(id, opts)).collect(),
    }
}

struct Ctx {
    scale: f64,
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Ctx {
    /// Gating check `measured <= limit * tolerance_scale`.
    fn at_most(&mut self, label: impl Into<String>, measured: f64, limit: f64) {
        let limit = limit * self.scale;
        self.checks.push(Check { label: label.into(), measured, limit, pass: measured <= limit, gating: true });
    }

    /// Gating check on a condition that has no tolerance.
    fn holds(&mut self, label: impl Into<String>, measured: f64, pass: bool) {
        self.checks.push(Check { label: label.into(), measured, limit: f64::NAN, pass, gating: true });
    }

    fn info(&mut self, label: impl Into<String>, measured: f64, limit: f64) {
        self.checks.push(Check { label: label.into(), measured, limit, pass: measured <= limit, gating: false });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `m` points spread over the middle 80% of `(lo, hi]`.
fn middle(f: &XiFunction, m: usize) -> Vec<f64> {
    let (lo, hi) = f.domain();
    (0..m).map(|i| lo + (hi - lo) * (0.1 + 0.8 * i as f64 / (m - 1) as f64)).collect()
}

fn sphere_oracle(ctx: &mut Ctx) -> Result<()> {
    for n in 2..=4usize {
        let grid = match n {
            2 => build_grid(GridMode::Full2d, 2, Resolution::full2d(128, 256))?,
            _ => build_grid(GridMode::Axisym, n, Resolution::axisym(2048))?,
        };
        let mut worst: f64 = 0.0;
        for rho in [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8] {
            let q = quermass_vector(&geodesic_sphere(&grid, rho)?)?;
            for k in -1..n as isize {
                worst = worst.max(rel(q.a(k), sphere_quermass(n, rho, k)?));
            }
        }
        ctx.at_most(format!("n={n} max relative error over k and rho"), worst, 1e-9);
    }
    Ok(())
}

fn closed_form_identities(ctx: &mut Ctx) -> Result<()> {
    for n in 2..=6usize {
        let f = xi_closed_minkowski_sq_fn(n)?;
        let (_, hi) = f.domain();
        let mut worst: f64 = 0.0;
        for i in 1..=1000 {
            let s = hi * i as f64 / 1001.0;
            let r = minkowski_sq_ode_residual(&f, s)?;
            let nf = n as f64;
            let size = (2.0 * (nf - 1.0) / nf * f.eval(s)?).abs() + ((2.0 * nf + 2.0 * f.derivative(s)?) * s).abs();
            worst = worst.max(r.abs() / size);
        }
        ctx.at_most(format!("squared-Minkowski ODE residual, n={n}"), worst, 1e-9);
    }
    for n in 3..=6usize {
        let f = xi_closed_20_fn(n)?;
        let (_, hi) = f.domain();
        let mut worst: f64 = 0.0;
        for i in 1..=1000 {
            let s = hi * i as f64 / 1001.0;
            worst = worst.max(xi20_ode_residual(&f, s)?.abs() / f.derivative(s)?.abs().max(1.0));
        }
        ctx.at_most(format!("xi_2,0 ODE residual, n={n}"), worst, 1e-9);
    }
    let pi2 = std::f64::consts::PI.powi(2);
    ctx.at_most("xi(4 pi^2) = 16 pi^2, n=2", rel(xi_closed_minkowski_sq(2, 4.0 * pi2)?, 16.0 * pi2), 1e-12);
    ctx.at_most("xi_2,0(2 pi^2) = 4 pi^2, n=3", rel(xi_closed_20(3, 2.0 * pi2)?, 4.0 * pi2), 1e-12);
    Ok(())
}

fn triple_agreement(ctx: &mut Ctx) -> Result<()> {
    for n in 3..=5usize {
        let closed = xi_closed_20_fn(n)?;
        let param = xi_parametric(n, 2, 0, DEFAULT_KNOTS)?;
        let ode = xi_ode_20(n, 20_000, 0.05)?;
        let (mut cp, mut po, mut co) = (0.0f64, 0.0f64, 0.0f64);
        for s in middle(&param, 400) {
            let (c, p, o) = (closed.eval(s)?, param.eval(s)?, ode.eval(s)?);
            cp = cp.max(rel(c, p));
            po = po.max(rel(o, p));
            co = co.max(rel(c, o));
        }
        ctx.at_most(format!("n={n} closed vs parametric"), cp, 1e-7);
        ctx.at_most(format!("n={n} ODE vs parametric"), po, 1e-7);
        ctx.at_most(format!("n={n} closed vs ODE"), co, 1e-7);
    }
    ctx.notes.push(
        "the sphere profile is A_2 = a s^((n-2)/n) - (n-1)(n-2)/2 s in s = A_0; the closed form and its ODE \
         carry -(n-1)/2 s, which coincides only at n = 3"
            .into(),
    );
    Ok(())
}

fn recursion(ctx: &mut Ctx) -> Result<()> {
    for (n, k) in [(5usize, 4isize), (6, 4)] {
        let fk = xi_parametric(n, k, k - 2, DEFAULT_KNOTS)?;
        let fk2 = xi_parametric(n, k - 2, k - 4, DEFAULT_KNOTS)?;
        let mut worst: f64 = 0.0;
        for s in middle(&fk, 200) {
            worst = worst.max(xi_ode_residual(n, k, &fk, &fk2, s)?.abs() / fk.derivative(s)?.abs());
        }
        ctx.at_most(format!("(n,k)=({n},{k}) relative residual"), worst, 1e-5);
    }
    Ok(())
}

fn minkowski(ctx: &mut Ctx) -> Result<()> {
    let shape = ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps: 0.05, l: 2 };
    for n in 2..=4usize {
        let (mode, res): (GridMode, Vec<Resolution>) = match n {
            2 => (GridMode::Full2d, [64, 128, 256, 512].iter().map(|&k| Resolution::full2d(k, 2 * k)).collect()),
            _ => (GridMode::Axisym, [512, 1024, 2048, 4096].iter().map(|&k| Resolution::axisym(k)).collect()),
        };
        let finest = *res.last().expect("four resolutions");
        let fields = compute_geometry(&shape.build(&build_grid(mode, n, finest)?)?)?;
        for k in 0..n {
            let (lhs, rhs) = minkowski_sides(&fields, k)?;
            ctx.at_most(format!("n={n} k={k} |residual|/RHS at {}x{}", finest.n_theta, finest.n_phi), rel(lhs, rhs), 1e-6);
            let study = convergence_study(&ConvergenceCheck::Minkowski { k }, &shape, mode, n, &res)?;
            match study.order {
                ObservedOrder::Order(p) => ctx.holds(format!("n={n} k={k} observed order >= 1.8"), p, p >= 1.8),
                ObservedOrder::Saturated => ctx.holds(format!("n={n} k={k} observed order (saturated)"), 0.0, false),
            }
        }
    }
    Ok(())
}

fn sphere_flow(ctx: &mut Ctx) -> Result<()> {
    let grid = build_grid(GridMode::Full2d, 2, Resolution::full2d(16, 32))?;
    let start = geodesic_sphere(&grid, FRAC_PI_6)?;
    let mut spec = FlowSpec::new(FlowLaw::Gerhardt, 1);
    spec.step.adaptive = false;
    spec.step.dt_init = 1e-3;
    spec.stop.t_max = 1.0;
    spec.record_interval = 0.1;
    let trace = run(start.clone(), &spec, &[]).map_err(|f| f.error)?;
    let want = (0.5 * 0.5f64.exp()).asin();
    let rho = trace.final_graph.as_ref().map_or(f64::NAN, |g| g.max_rho());
    ctx.at_most("relative radius error at t=1", rel(rho, want), 1e-6);
    let spread = trace.final_graph.as_ref().map_or(f64::NAN, |g| g.max_rho() - g.min_rho());
    ctx.at_most("radius spread over nodes at t=1", spread, 1e-12);

    let mut spec = FlowSpec::new(FlowLaw::Gerhardt, 1);
    spec.stop.equator_tol = 1e-4;
    spec.record_interval = 0.05;
    let trace = run(start, &spec, &[]).map_err(|f| f.error)?;
    ctx.holds("run stops at the equator", trace.last().min_rho, trace.stop == StopReason::EquatorReached);
    ctx.at_most("|T - 2 ln 2|", (trace.last().t - 2.0 * LN_2).abs(), 5e-2);
    Ok(())
}

fn q_monotonicity(ctx: &mut Ctx) -> Result<()> {
    let cases = [
        (2usize, GridMode::Full2d, Resolution::full2d(24, 48), MonitorKind::MinkowskiSq),
        (3, GridMode::Axisym, Resolution::axisym(128), MonitorKind::Xi20),
        (4, GridMode::Axisym, Resolution::axisym(128), MonitorKind::Pair(3)),
    ];
    for (n, mode, res, monitor) in cases {
        let grid = build_grid(mode, n, res)?;
        let shape = match mode {
            GridMode::Full2d => ShapeSpec::Harmonics {
                rho0: FRAC_PI_4,
                terms: vec![Harmonic { l: 2, m: 0, amplitude: 0.05 }, Harmonic { l: 2, m: 2, amplitude: 0.03 }],
            },
            GridMode::Axisym => ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps: 0.05, l: 2 },
        };
        let mut spec = FlowSpec::new(FlowLaw::Gerhardt, n - 1);
        spec.record_interval = 1e-2;
        let trace = run(shape.build(&grid)?, &spec, &[monitor]).map_err(|f| f.error)?;
        let q = trace.q_series(monitor).expect("monitor was requested");
        let q0 = q[0].abs();
        let rise = q.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let tag = format!("n={n} k={} {}", n - 1, monitor.name());
        ctx.at_most(format!("{tag}: max Q increase / |Q(0)|"), rise / q0, 1e-7);
        ctx.at_most(format!("{tag}: |Q(end)| / |Q(0)|"), q[q.len() - 1].abs() / q0, 1e-3);
        ctx.holds(format!("{tag}: reached the equator"), trace.last().t, trace.stop == StopReason::EquatorReached);
        let min_kappa = trace.records.iter().map(|r| r.min_kappa).fold(f64::INFINITY, f64::min);
        ctx.info(format!("{tag}: -min kappa along the run (convexity monitor)"), -min_kappa, 0.0);
    }
    Ok(())
}

fn cgls0_conservation(ctx: &mut Ctx) -> Result<()> {
    // the coarse full2d run documents a discretization floor and does not gate
    let cases = [
        (2usize, GridMode::Axisym, Resolution::axisym(128), true),
        (3, GridMode::Axisym, Resolution::axisym(128), true),
        (2, GridMode::Full2d, Resolution::full2d(16, 32), false),
    ];
    for (n, mode, res, gating) in cases {
        let grid = build_grid(mode, n, res)?;
        let start = ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps: 0.05, l: 2 }.build(&grid)?;
        let mut spec = FlowSpec::new(FlowLaw::Cgls0, 0);
        spec.stop.t_max = 20.0;
        spec.stop.stationarity_tol = 1e-7;
        spec.record_interval = 0.05;
        let trace = run(start, &spec, &[]).map_err(|f| f.error)?;
        let tag = format!("n={n} {mode:?} {}x{}", res.n_theta, res.n_phi).to_lowercase();
        let bound = |ctx: &mut Ctx, label: String, measured: f64, limit: f64| {
            if gating {
                ctx.at_most(label, measured, limit);
            } else {
                ctx.info(label, measured, limit);
            }
        };
        let v0 = trace.first().quermass.volume();
        let drift = trace.records.iter().map(|r| (r.quermass.volume() - v0).abs()).fold(0.0, f64::max);
        bound(ctx, format!("{tag}: max |A_-1(t) - A_-1(0)| / A_-1(0)"), drift / v0, 1e-7);
        for m in 0..n as isize {
            let a0 = trace.first().quermass.a(m);
            let rise = trace
                .records
                .windows(2)
                .map(|w| w[1].quermass.a(m) - w[0].quermass.a(m))
                .fold(f64::NEG_INFINITY, f64::max);
            bound(ctx, format!("{tag}: max A_{m} increase / A_{m}(0)"), rise / a0, 1e-7);
        }
        bound(ctx, format!("{tag}: max |f| at stop (by t = 20)"), trace.last().max_abs_f, 1e-6);
    }
    ctx.notes.push(
        "on the 16x32 full2d grid A_1 can rise by ~5e-7 near stationarity, where the true decrease is second order \
         in the deviation from a sphere and the grid error is first order; the rise shrinks like h^4"
            .into(),
    );
    Ok(())
}

fn rigidity(ctx: &mut Ctx) -> Result<()> {
    let tol = GAP_TOLERANCE * ctx.scale;
    for n in 2..=4usize {
        let grid = build_grid(GridMode::Axisym, n, Resolution::axisym(1024))?;
        for rho in [FRAC_PI_8, FRAC_PI_4, 3.0 * FRAC_PI_8] {
            let r = verify_with_tolerance(&geodesic_sphere(&grid, rho)?, tol)?;
            let worst = r.rows.iter().map(|x| x.rel_gap.abs()).fold(0.0, f64::max);
            ctx.holds(format!("n={n} sphere rho={rho:.4}: all rows pass, max |gap|/scale"), worst, r.all_pass());
        }
    }
    let eps = [0.02, 0.04, 0.08, 0.16];
    let sweeps = [
        (2usize, GridMode::Full2d, 128usize, true),
        (2, GridMode::Axisym, 1024, true),
        (3, GridMode::Axisym, 1024, false),
        (4, GridMode::Axisym, 1024, false),
    ];
    for (n, mode, nt, slope_gating) in sweeps {
        let family = FamilySpec {
            n: vec![n],
            mode,
            resolutions: vec![nt],
            rho0: vec![FRAC_PI_4],
            l: vec![2],
            eps: eps.to_vec(),
        };
        let sweep = sweep_with_tolerance(&family, tol);
        let tag = format!("n={n} {mode:?}").to_lowercase();
        ctx.holds(format!("{tag}: every perturbed shape evaluated and convex"), sweep.summary.experiments as f64, {
            sweep.summary.errored == 0 && sweep.summary.hypothesis_violated == 0
        });
        if sweep.summary.errored > 0 || sweep.summary.hypothesis_violated > 0 {
            continue;
        }
        let strict = sweep.reports.iter().flat_map(|r| &r.rows).all(|x| x.status == RowStatus::Strict);
        ctx.holds(format!("{tag}: all gaps strictly positive, min gap/scale"), sweep.summary.min_rel_gap, strict);
        for (i, row) in sweep.reports[0].rows.iter().enumerate() {
            let gaps: Vec<f64> = sweep.reports.iter().map(|r| r.rows[i].gap).collect();
            let slope = fitted_slope(&eps, &gaps);
            let label = format!("{tag} {}: |slope - 2|", row.name);
            if slope_gating {
                ctx.at_most(label, (slope - 2.0).abs(), 0.1);
            } else {
                ctx.info(label, (slope - 2.0).abs(), 0.1);
            }
        }
    }
    ctx.notes.push(
        "slopes for n = 3, 4 are reported only: the exact gap carries an eps^3 term for l = 2 that lifts the \
         fitted slope to about 2.1-2.2 over this eps range, independent of resolution"
            .into(),
    );
    Ok(())
}

fn cross_check(ctx: &mut Ctx) -> Result<()> {
    let full = build_grid(GridMode::Full2d, 2, Resolution::full2d(64, 128))?;
    let axi = build_grid(GridMode::Axisym, 2, Resolution::axisym(64))?;
    let shapes = [
        ShapeSpec::Sphere { rho0: 1.0 },
        ShapeSpec::Perturbed { rho0: FRAC_PI_4, eps: 0.05, l: 2 },
        ShapeSpec::Perturbed { rho0: 0.6, eps: 0.08, l: 3 },
    ];
    for shape in &shapes {
        let quantities = |grid| -> Result<Vec<f64>> {
            let g = shape.build(grid)?;
            let f = compute_geometry(&g)?;
            let mut out = quermass_from_geometry(&g, &f)?.values().to_vec();
            out.push(integrate(&f, &f.sigma_field(2)));
            for k in 0..2 {
                let (l, r) = minkowski_sides(&f, k)?;
                out.extend([l, r]);
            }
            Ok(out)
        };
        let (a, b) = (quantities(&full)?, quantities(&axi)?);
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max);
        ctx.at_most(format!("{}: max relative difference", shape.label()), worst, 1e-8);
    }
    Ok(())
}
