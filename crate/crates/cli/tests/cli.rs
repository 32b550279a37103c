use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qf(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qf"));
    cmd.args(args);
    match workers {
        Some(w) => cmd.env("QF_WORKERS", w),
        None => cmd.env_remove("QF_WORKERS"),
    };
    cmd.output().expect("qf runs")
}

fn shipped(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

/// Writes `text` as a config and runs `args` with it, output under `out`.
fn run_with(dir: &TempDir, text: &str, args: &[&str], out: &Path) -> Output {
    let path = dir.path().join(format!("config-{}.json", out.file_name().unwrap().to_string_lossy()));
    fs::write(&path, text).unwrap();
    let mut all: Vec<&str> = args.to_vec();
    let (p, o) = (path.display().to_string(), out.display().to_string());
    all.extend([p.as_str(), "--out", o.as_str()]);
    qf(&all, None)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_on_a_geodesic_sphere_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("verify");
    let o = qf(&["verify", "run", &shipped("verify_sphere.json"), "--out", &out.display().to_string()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(out.join("verify.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2 + 3 + 1);
    assert!(rows.iter().all(|r| r["status"] == "equality_numerical" && r["pass"] == true));
    let csv = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + rows.len());
}

#[test]
fn cone_breakdown_exits_two_with_partial_trace() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("cgls");
    let o = qf(&["flow", "run", &shipped("cgls_breakdown.json"), "--out", &out.display().to_string()], None);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("Gamma_3 cone"), "{}", stderr(&o));
    let trace = read_json(out.join("trace.json"));
    assert_eq!(trace["stop"], "breakdown");
    assert_eq!(trace["records"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn config_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    for (name, text, needle) in [
        ("malformed", r#"{"command":"shape","n":2,"#, "EOF"),
        ("unknown", r#"{"command":"shape","grid":{"n_theta":32,"colour":1}}"#, "grid.colour"),
        ("negative", r#"{"command":"shape","grid":{"n_theta":-32}}"#, "grid.n_theta"),
    ] {
        let o = run_with(&tmp, text, &["shape", "eval"], &tmp.path().join(name));
        assert_eq!(code(&o), 3, "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
        assert!(!tmp.path().join(name).exists(), "{name}: nothing may be written");
    }
    // a flow config handed to another subcommand
    let o = qf(&["shape", "eval", &shipped("gerhardt_flow.json")], None);
    assert_eq!(code(&o), 3);
    // missing files and usage errors use the same code
    assert_eq!(code(&qf(&["shape", "eval", "/nonexistent/config.json"], None)), 3);
    assert_eq!(code(&qf(&["frobnicate"], None)), 3);
    let o = qf(&["shape", "eval", &shipped("verify_sphere.json")], Some("zero"));
    assert_eq!(code(&o), 3);
}

#[test]
fn suite_dry_run_prints_the_plan() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("suite");
    let o = qf(&["suite", "--dry-run", "--out", &out.display().to_string()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan = String::from_utf8(o.stdout).unwrap();
    for id in 1..=10 {
        assert!(plan.contains(&format!("criterion {id:>2}")), "{plan}");
    }
    assert!(plan.contains("suite.json") && plan.contains("\"command\": \"suite\""));
    assert!(!out.exists());
}

#[test]
fn suite_exit_code_follows_the_criteria() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("fast");
    let o = run_with(&tmp, r#"{"command":"suite","suite":{"criteria":[2,4]}}"#, &["suite"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(out.join("suite.json"));
    assert_eq!(report["criteria"].as_array().unwrap().len(), 2);
    assert!(report["criteria"][0].get("elapsed_s").is_none());
    assert!(fs::read_to_string(out.join("suite.txt")).unwrap().ends_with("2/2 criteria passed\n"));
    // criterion 3 is red at n = 4, 5 (see README)
    let o = run_with(&tmp, r#"{"command":"suite","suite":{"criteria":[3]}}"#, &["suite"], &tmp.path().join("red"));
    assert_eq!(code(&o), 1);
    // tightening every tolerance a millionfold fails the closed-form identities
    let text = r#"{"command":"suite","suite":{"criteria":[2]},"tolerances":{"suite_scale":1e-6}}"#;
    assert_eq!(code(&run_with(&tmp, text, &["suite"], &tmp.path().join("tight"))), 1);
}

#[test]
fn shape_and_xi_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("shape");
    let o = run_with(&tmp, r#"{"command":"shape","n":2,"grid":{"n_theta":32}}"#, &["shape", "eval"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let shape = read_json(out.join("shape.json"));
    assert_eq!(shape["quermass"].as_array().unwrap().len(), 3);
    assert_eq!(shape["convex"], true);
    assert_eq!(shape["resolution"]["n_phi"], 64);

    let out = tmp.path().join("xi");
    let o = qf(&["xi", "dump", &shipped("xi20_table.json"), "--out", &out.display().to_string()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("xi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 201);
    assert!(!out.join("xi.json").exists());
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(last[1] > last[0]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn same_config_gives_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let flow = r#"{
        "command": "flow", "n": 3,
        "grid": {"mode": "axisym", "n_theta": 32},
        "shape": {"family": "perturbed", "rho0": 0.8, "eps": 0.04, "l": 2},
        "flow": {"law": "gerhardt", "k": 2, "record_interval": 0.05, "stop": {"t_max": 0.3}},
        "monitors": [{"pair": "xi20"}]
    }"#;
    let sweep = r#"{
        "command": "verify",
        "sweep": {"n": [2, 3], "mode": "axisym", "resolutions": [32, 64], "rho0": [0.6], "l": [2, 3], "eps": [0.0, 0.05]}
    }"#;
    for (name, text, args) in [("flow", flow, ["flow", "run"]), ("sweep", sweep, ["verify", "run"])] {
        let path = tmp.path().join(format!("{name}.json"));
        fs::write(&path, text).unwrap();
        let mut runs = Vec::new();
        for (i, workers) in [Some("1"), Some("4"), None].into_iter().enumerate() {
            let out = tmp.path().join(format!("{name}-{i}"));
            let o = qf(&[args[0], args[1], &path.display().to_string(), "--out", &out.display().to_string()], workers);
            assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
            runs.push((files(&out), o.stdout));
        }
        assert_eq!(runs[0].0.len(), 2);
        assert!(runs.windows(2).all(|w| w[0] == w[1]), "{name} output differs between runs");
    }
}
