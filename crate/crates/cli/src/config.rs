use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use qf_core::flow::{FlowSpec, Monitor, MonitorKind};
use qf_core::suite::{describe_criterion, CRITERIA};
use qf_core::surface::{build_grid, GridMode, RadialGraph, Resolution, RoundGrid, ShapeSpec, MIN_RESOLUTION};
use qf_core::verify::{FamilySpec, GAP_TOLERANCE};
use qf_core::xi::{DEFAULT_KNOTS, MIN_KNOTS};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Shape,
    Flow,
    Xi,
    Verify,
    Suite,
}

impl Command {
    /// The subcommand that runs this config.
    pub fn invocation(self) -> &'static str {
        match self {
            Command::Shape => "shape eval",
            Command::Flow => "flow run",
            Command::Xi => "xi dump",
            Command::Verify => "verify run",
            Command::Suite => "suite",
        }
    }
}

/// Everything a run needs. Structural choices live here, not in flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_shape")]
    pub shape: ShapeSpec,
    /// Required by `flow`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub monitors: Vec<MonitorKind>,
    #[serde(default)]
    pub xi: XiConfig,
    /// When present, `verify` runs the whole family instead of `shape`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<FamilySpec>,
    #[serde(default)]
    pub suite: SuiteConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads for parallel sweeps and grid kernels; `QF_WORKERS`
    /// overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_n() -> usize {
    2
}

fn default_shape() -> ShapeSpec {
    ShapeSpec::Sphere { rho0: FRAC_PI_4 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Defaults to full2d for n = 2 and axisym otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<GridMode>,
    pub n_theta: usize,
    /// Longitudes for full2d; defaults to `2 * n_theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_phi: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { mode: None, n_theta: 64, n_phi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XiConfig {
    pub function: XiSelect,
    pub knots: usize,
    /// Evenly spaced sample points inside the domain.
    pub points: usize,
}

impl Default for XiConfig {
    fn default() -> Self {
        Self { function: XiSelect::Pair { k: 1, l: -1 }, knots: DEFAULT_KNOTS, points: 1001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiSelect {
    /// Parametric `xi_{k,l}` with `A_k = xi(A_l)`.
    Pair { k: isize, l: isize },
    /// Parametric `(int sigma_1)^2 = xi(A_0^2)`.
    MinkowskiSq,
    ClosedMinkowskiSq,
    #[serde(rename = "closed_20")]
    Closed20,
    /// `xi_{2,0}` integrated from its ODE.
    #[serde(rename = "ode_20")]
    Ode20 {
        #[serde(default = "default_ode_steps")]
        steps: usize,
        #[serde(default = "default_min_fraction")]
        min_fraction: f64,
    },
}

fn default_ode_steps() -> usize {
    20_000
}

fn default_min_fraction() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub criteria: Vec<u8>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { criteria: CRITERIA.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative band in which an inequality gap counts as equality.
    pub gap: f64,
    /// Multiplies every acceptance tolerance; below 1 tightens the suite.
    pub suite_scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap: GAP_TOLERANCE, suite_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("qf-out"), formats: vec![Format::Json, Format::Csv] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Parses and validates a config; errors name the offending field path.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        // serde_path_to_error renders an empty path as "." or "?"
        if path == "." || path == "?" {
            CliError::Config(e.inner().to_string())
        } else {
            CliError::Config(format!("{path}: {}", e.inner()))
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    /// Defaults for `command`.
    pub fn new(command: Command) -> Self {
        serde_json::from_value(serde_json::json!({ "command": command })).expect("defaults deserialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n < 2 {
            return Err(bad("n", "dimension must be at least 2"));
        }
        self.resolution()?;
        for (path, tol) in [("tolerances.gap", self.tolerances.gap), ("tolerances.suite_scale", self.tolerances.suite_scale)] {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(bad(path, format!("must be positive and finite, got {tol}")));
            }
        }
        if self.output.formats.is_empty() {
            return Err(bad("output.formats", "at least one format is required"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1"));
        }
        if let Some(id) = self.suite.criteria.iter().find(|&&id| describe_criterion(id).is_none()) {
            return Err(bad("suite.criteria", format!("unknown criterion {id}")));
        }
        if self.xi.knots < MIN_KNOTS {
            return Err(bad("xi.knots", format!("need at least {MIN_KNOTS}")));
        }
        if self.xi.points == 0 {
            return Err(bad("xi.points", "need at least one point"));
        }
        if let Some(spec) = &self.flow {
            spec.validate(self.n).map_err(|e| bad("flow", e))?;
        } else if self.command == Command::Flow {
            return Err(bad("flow", "section is required for command `flow`"));
        }
        for (i, &m) in self.monitors.iter().enumerate() {
            Monitor::new(m, self.n).map_err(|e| bad(&format!("monitors[{i}]"), e))?;
        }
        if let Some(family) = &self.sweep {
            if family.n.is_empty() || family.resolutions.is_empty() || family.rho0.is_empty() {
                return Err(bad("sweep", "n, resolutions and rho0 must be non-empty"));
            }
            if family.l.is_empty() || family.eps.is_empty() {
                return Err(bad("sweep", "l and eps must be non-empty"));
            }
        }
        if matches!(self.command, Command::Shape | Command::Flow) || (self.command == Command::Verify && self.sweep.is_none()) {
            self.graph()?;
        }
        Ok(())
    }

    pub fn mode(&self) -> GridMode {
        self.grid.mode.unwrap_or(if self.n == 2 { GridMode::Full2d } else { GridMode::Axisym })
    }

    pub fn resolution(&self) -> Result<Resolution, CliError> {
        let nt = self.grid.n_theta;
        if nt < MIN_RESOLUTION {
            return Err(bad("grid.n_theta", format!("need at least {MIN_RESOLUTION} nodes, got {nt}")));
        }
        match (self.mode(), self.grid.n_phi) {
            (GridMode::Full2d, n_phi) => {
                let np = n_phi.unwrap_or(2 * nt);
                if np < MIN_RESOLUTION {
                    return Err(bad("grid.n_phi", format!("need at least {MIN_RESOLUTION} nodes, got {np}")));
                }
                Ok(Resolution::full2d(nt, np))
            }
            (GridMode::Axisym, None | Some(1)) => Ok(Resolution::axisym(nt)),
            (GridMode::Axisym, Some(np)) => Err(bad("grid.n_phi", format!("axisym grids have one longitude, got {np}"))),
        }
    }

    pub fn build_grid(&self) -> Result<Arc<RoundGrid>, CliError> {
        build_grid(self.mode(), self.n, self.resolution()?).map_err(|e| bad("grid", e))
    }

    pub fn graph(&self) -> Result<RadialGraph, CliError> {
        self.shape.build(&self.build_grid()?).map_err(|e| bad("shape", e))
    }

    /// Identifier in the same form the sweep uses.
    pub fn experiment_id(&self) -> Result<String, CliError> {
        let res = self.resolution()?;
        Ok(format!("n{}-{:?}{}x{}-{}", self.n, self.mode(), res.n_theta, res.n_phi, self.shape.label()).to_lowercase())
    }

    /// `QF_WORKERS` wins over the config value.
    pub fn workers(&self, env: Option<&str>) -> Result<Option<usize>, CliError> {
        match env.map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => match s.parse::<usize>() {
                Ok(w) if w > 0 => Ok(Some(w)),
                _ => Err(CliError::Config(format!("QF_WORKERS: expected a positive integer, got `{s}`"))),
            },
            None => Ok(self.workers),
        }
    }
}

/// Creates `dir` and checks that files can be written into it.
pub fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: dir.to_path_buf(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".qf-write-check");
    fs::write(&probe, b"").map_err(io)?;
    fs::remove_file(&probe).map_err(io)
}
