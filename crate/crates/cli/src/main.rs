use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use qf_cli::{dispatch, parse_config, plan, CliError, Command, RunConfig, SCHEMA};

/// Radial-graph curvature flows, quermassintegrals and comparison functions
/// in the upper hemisphere, driven by JSON configs.
///
/// Exit codes: 0 success, 1 verification failure, 2 flow breakdown,
/// 3 config error. `QF_WORKERS` sets the worker thread count.
#[derive(Debug, Parser)]
#[command(name = "qf", version, after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Output directory; overrides `output.dir` in the config.
    #[arg(short, long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Print every row or record instead of a summary.
    #[arg(short, long, global = true)]
    verbose: bool,

    /// Validate the config and print the plan without running it.
    #[arg(long, global = true)]
    dry_run: bool,
}

const CONFIG_HELP: &str = "\
Config defaults (see `qf schema` for the full schema):
  n 2; grid axisym (full2d when n = 2) with n_theta 64 and n_phi 2*n_theta;
  shape {\"family\":\"sphere\",\"rho0\":pi/4}; monitors []; xi pair k=1 l=-1,
  2000 knots, 1001 points; suite criteria 1-10; tolerances gap 1e-8,
  suite_scale 1; output dir qf-out in json and csv.";

#[derive(Debug, Subcommand)]
enum Sub {
    /// Evaluate quermassintegrals and curvature bounds of a shape.
    Shape {
        #[command(subcommand)]
        action: ShapeAction,
    },
    /// Integrate a curvature flow and write its trace.
    Flow {
        #[command(subcommand)]
        action: FlowAction,
    },
    /// Tabulate a comparison function.
    Xi {
        #[command(subcommand)]
        action: XiAction,
    },
    /// Check the inequalities on one shape or a sweep family.
    Verify {
        #[command(subcommand)]
        action: VerifyAction,
    },
    /// Run the acceptance battery and write a consolidated report.
    Suite {
        /// Optional config with `"command": "suite"`.
        config: Option<PathBuf>,
    },
    /// Run any config, dispatching on its `command` field.
    Run { config: PathBuf },
    /// Print the JSON schema for configs.
    Schema,
}

#[derive(Debug, Subcommand)]
enum ShapeAction {
    Eval { config: PathBuf },
}

#[derive(Debug, Subcommand)]
enum FlowAction {
    Run { config: PathBuf },
}

#[derive(Debug, Subcommand)]
enum XiAction {
    Dump { config: PathBuf },
}

#[derive(Debug, Subcommand)]
enum VerifyAction {
    Run { config: PathBuf },
}

fn load(path: &PathBuf, expected: Option<Command>) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.clone(), source })?;
    let config = parse_config(&text)?;
    match expected {
        Some(cmd) if cmd != config.command => Err(CliError::Config(format!(
            "command: config is for `{}` but `{}` was invoked",
            config.command.invocation(),
            cmd.invocation()
        ))),
        _ => Ok(config),
    }
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    let mut config = match &cli.command {
        Sub::Schema => {
            print!("{SCHEMA}");
            return Ok(ExitCode::SUCCESS);
        }
        Sub::Shape { action: ShapeAction::Eval { config } } => load(config, Some(Command::Shape))?,
        Sub::Flow { action: FlowAction::Run { config } } => load(config, Some(Command::Flow))?,
        Sub::Xi { action: XiAction::Dump { config } } => load(config, Some(Command::Xi))?,
        Sub::Verify { action: VerifyAction::Run { config } } => load(config, Some(Command::Verify))?,
        Sub::Suite { config: Some(path) } => load(path, Some(Command::Suite))?,
        Sub::Suite { config: None } => RunConfig::new(Command::Suite),
        Sub::Run { config } => load(config, None)?,
    };
    if let Some(dir) = cli.out {
        config.output.dir = dir;
    }
    if cli.dry_run {
        print!("{}", plan(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let env = std::env::var("QF_WORKERS").ok();
    if let Some(w) = config.workers(env.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    }
    Ok(dispatch(&config, cli.verbose)?.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own usage errors would exit 2, which means flow breakdown here
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qf: {e}");
            e.exit_code()
        }
    }
}
