use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

fn lgh(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lgh"));
    cmd.args(args).env_remove("LGH_OUTPUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("LGH_OUTPUT_DIR", dir);
    }
    cmd.output().expect("spawn lgh")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn satellite(out: &Path) -> Value {
    let mut cfg: Value = serde_json::from_str(include_str!("../configs/satellite.json")).unwrap();
    cfg["output_dir"] = json!(out);
    cfg["emit_plots"] = json!(false);
    cfg
}

fn exp(x: [f64; 3]) -> [f64; 9] {
    use lgh_core::lie::{AlgebraVector, LieGroupSpec};
    let g = LieGroupSpec::so3().exp_alg(&AlgebraVector::new(x[0], x[1], x[2]));
    g.to_row_vec().try_into().unwrap()
}

/// Turn about e2 then about e3 on [0, 2]; the optimal switch is interior.
fn split(out: &Path, beta: f64) -> Value {
    let lie = lgh_core::lie::LieGroupSpec::so3();
    let a = lie.exp_alg(&lgh_core::lie::AlgebraVector::new(0.0, 0.6, 0.0));
    let b = lie.exp_alg(&lgh_core::lie::AlgebraVector::new(0.0, 0.0, 0.4));
    json!({
        "problem": {
            "t0": 0.0, "tf": 2.0, "g0": IDENTITY, "gf": (a * b).to_row_vec(),
            "phase1": { "id": "a", "active_channels": [1, 2] },
            "phase2": { "id": "b", "active_channels": [1, 3] },
            "switch": { "g_s": exp([0.15, 0.45, -0.1]), "t_s": 0.8 }
        },
        "eg": { "beta": beta, "max_iters": 1500 },
        "output_dir": out,
    })
}

fn config_file(dir: &Path, cfg: &Value) -> String {
    write(dir, "config.json", &serde_json::to_string_pretty(cfg).unwrap())
        .to_string_lossy()
        .into_owned()
}

#[test]
fn zero_control_keeps_state() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config_file(dir.path(), &satellite(&out));
    let controls = write(dir.path(), "u.csv", "t,u1,u2,u3\n0,0,0,0\n");
    let res = lgh(&["simulate", "--config", &cfg, "--controls", controls.to_str().unwrap()], None);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let events = read_json(out.join("events.json"));
    let fin: Vec<f64> = serde_json::from_value(events["final_state"].clone()).unwrap();
    assert_eq!(fin, vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn surface_crossing_is_located() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = json!({
        "problem": {
            "t0": 0.0, "tf": 1.0, "g0": IDENTITY, "gf": IDENTITY,
            "phase1": { "id": "a", "active_channels": [1, 2] },
            "phase2": { "id": "b", "active_channels": [1, 2] },
            "surface": { "level": { "kind": "matrix_entry", "row": 3, "col": 3, "offset": 0.5f64.cos() } }
        },
        "output_dir": out,
    });
    let cfg = config_file(dir.path(), &cfg);
    let controls = write(dir.path(), "u.csv", "t,u1,u2\n0,0,1\n");
    let res = lgh(&["simulate", "--config", &cfg, "--controls", controls.to_str().unwrap()], None);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let events = read_json(out.join("events.json"));
    let list = events["events"].as_array().unwrap();
    assert_eq!(list.len(), 1);
    let t = list[0]["t"].as_f64().unwrap();
    assert!((t - 0.5).abs() <= 1e-9, "event at {t}");
}

#[test]
fn malformed_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let controls = write(dir.path(), "u.csv", "t,u1\n0,0\n");
    let mut bad = satellite(&dir.path().join("out"));
    bad["problem"]["tf"] = json!(-1.0);
    let cfg = config_file(dir.path(), &bad);
    let res = lgh(&["simulate", "--config", &cfg, "--controls", controls.to_str().unwrap()], None);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("problem.t0"), "{}", stderr(&res));

    let mut typed = satellite(&dir.path().join("out"));
    typed["integrator"]["h"] = json!("small");
    let cfg = config_file(dir.path(), &typed);
    let res = lgh(&["optimize", "--config", &cfg], None);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("integrator.h"), "{}", stderr(&res));
}

#[test]
fn shoot_to_start_costs_nothing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config_file(dir.path(), &satellite(&out));
    let target = write(dir.path(), "t.json", "[0, 0, 1, 0, -1, 0, 1, 0, 0]");
    let res = lgh(&["shoot", "--config", &cfg, "--phase", "1", "--target", target.to_str().unwrap()], None);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = read_json(out.join("shoot.json"));
    assert!(report["result"]["converged"].as_bool().unwrap());
    assert!(report["result"]["cost"].as_f64().unwrap().abs() <= 1e-12);
}

#[test]
fn shoot_satellite_phase_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config_file(dir.path(), &satellite(&out));
    let target = write(dir.path(), "t.json", "[0, 1, 0, -1, 0, 0, 0, 0, 1]");
    let res = lgh(&["shoot", "--config", &cfg, "--phase", "1", "--target", target.to_str().unwrap()], None);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let report = read_json(out.join("shoot.json"));
    assert!(report["result"]["converged"].as_bool().unwrap());
    assert!(report["result"]["residual_norm"].as_f64().unwrap() < 1e-8);
    assert!(report["hamiltonian_drift"].as_f64().unwrap() <= 1e-8);
    assert!(report["max_orthogonality_defect"].as_f64().unwrap() < 1e-9);
    let csv = std::fs::read_to_string(out.join("extremal.csv")).unwrap();
    assert!(csv.starts_with("t,g11,"));
}

#[test]
fn off_group_target_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config_file(dir.path(), &satellite(&dir.path().join("out")));
    let target = write(dir.path(), "t.json", "[2, 0, 0, 0, 1, 0, 0, 0, 1]");
    let res = lgh(&["shoot", "--config", &cfg, "--phase", "1", "--target", target.to_str().unwrap()], None);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("target"));
}

#[test]
fn optimize_from_converged_point_and_beta_ordering() {
    let dir = TempDir::new().unwrap();
    let mut iterations = Vec::new();
    let mut tight = None;
    for beta in [1e-3, 1e-6] {
        let out = dir.path().join(format!("out{beta}"));
        let cfg = config_file(dir.path(), &split(&out, beta));
        let res = lgh(&["optimize", "--config", &cfg], None);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        let summary = read_json(out.join("summary.json"));
        assert_eq!(summary["stop_reason"], "stationary");
        iterations.push(summary["iterations"].as_u64().unwrap());
        tight = Some(summary);
    }
    assert!(iterations[0] < iterations[1], "{iterations:?}");

    let summary = tight.unwrap();
    let out = dir.path().join("restart");
    let mut cfg = split(&out, 1e-6);
    cfg["problem"]["switch"] = json!({ "g_s": summary["final"]["g_s"], "t_s": summary["final"]["t_s"] });
    let cfg = config_file(dir.path(), &cfg);
    let res = lgh(&["optimize", "--config", &cfg], None);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let again = read_json(out.join("summary.json"));
    assert_eq!(again["iterations"].as_u64().unwrap(), 0);
    assert_eq!(again["stop_reason"], "stationary");
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn check_detects_flipped_costate_law() {
    let dir = TempDir::new().unwrap();
    let cfg = config_file(dir.path(), &satellite(&dir.path().join("out")));
    let res = lgh(&["check", "--config", &cfg], None);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));

    let res = lgh(&["check", "--config", &cfg, "--flip-costate-sign"], None);
    assert_eq!(code(&res), 1);
    let report = read_json(dir.path().join("out/check.json"));
    let failed: Vec<&str> = report["items"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| !i["passed"].as_bool().unwrap())
        .map(|i| i["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"pairing_constancy"), "{failed:?}");
}

#[test]
fn output_dir_override_and_determinism() {
    let dir = TempDir::new().unwrap();
    let configured = dir.path().join("configured");
    let mut cfg = split(&configured, 1e-3);
    cfg["emit_plots"] = json!(true);
    let cfg = config_file(dir.path(), &cfg);
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let target = dir.path().join(name);
        let res = lgh(&["optimize", "--config", &cfg], Some(&target));
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        runs.push(target);
    }
    assert!(!configured.exists());
    let mut names: Vec<_> = std::fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "convergence.gp"));
    for name in &names {
        let a = std::fs::read(runs[0].join(name)).unwrap();
        let b = std::fs::read(runs[1].join(name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn usage_errors_exit_one() {
    let res = lgh(&["shoot", "--phase", "3"], None);
    assert_eq!(code(&res), 1);
}
