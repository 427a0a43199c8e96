use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use persuasion::{ProblemInstance, SignalingScheme};
use serde_json::{json, Value};
use tempfile::TempDir;

fn persuade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persuade"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fixture_dir(id: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    let out = persuade(&["fixture", id, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn two_state_linf(constraints: Value) -> Value {
    json!({
        "k": 2,
        "prior": [0.5, 0.5],
        "utility": {"kind": "max_linear", "rank": 1, "functionals": [[1.0, 0.0], [0.0, 1.0]]},
        "constraints": constraints,
    })
}

#[test]
fn solve_two_state() {
    let dir = fixture_dir("example1:1/6");
    let out_path = dir.path().join("solved.json");
    let out = persuade(&[
        "solve",
        &path(&dir, "instance.json"),
        "--eps",
        "0.05",
        "--mode",
        "bi",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let file = read(&out_path);
    assert!(file["value"].as_f64().unwrap() >= 0.45);
    assert_eq!(file["report"]["mode"], "bi_criteria");
    assert_eq!(
        file["support"].as_array().unwrap().len(),
        file["probs"].as_array().unwrap().len()
    );
}

#[test]
fn solve_single_needs_a_margin() {
    let dir = fixture_dir("example1:1/6");
    let inst = path(&dir, "instance.json");
    let out = persuade(&["solve", &inst, "--eps", "0.05", "--mode", "single"]);
    assert_eq!(code(&out), 1);
    let out = persuade(&[
        "solve",
        &inst,
        "--eps",
        "0.05",
        "--mode",
        "single",
        "--slater-margin",
        "0.1",
    ]);
    assert_eq!(code(&out), 0);
    let file: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(file["report"]["mode"], "single_criteria");
}

#[test]
fn solve_infeasible_exits_2() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "infeasible.json",
        &two_state_linf(json!([
            {"kind": "linear", "params": {"coefficients": [1.0, 0.0]}, "bound": 0.2, "mode": "ex_ante"},
            {"kind": "linear", "params": {"coefficients": [0.0, 1.0]}, "bound": 0.2, "mode": "ex_ante"},
        ])),
    );
    assert_eq!(code(&persuade(&["solve", &inst, "--eps", "0.1"])), 2);
}

#[test]
fn solve_bad_prior_exits_1_with_field() {
    let dir = TempDir::new().unwrap();
    let mut inst = two_state_linf(json!([]));
    inst["prior"] = json!([0.5, 0.4]);
    let inst = write(dir.path(), "bad.json", &inst);
    let out = persuade(&["solve", &inst, "--eps", "0.1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior"));
}

#[test]
fn solve_reports_line_of_syntax_errors() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{\n  \"k\": 2,\n  \"prior\": [0.5, 0.5\n}").unwrap();
    let out = persuade(&["solve", p.to_str().unwrap(), "--eps", "0.1"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn solve_writes_grid_csv_and_lp() {
    let dir = fixture_dir("example1:0.1");
    let csv = dir.path().join("grid.csv");
    let lp = dir.path().join("lp.txt");
    let out = persuade(&[
        "solve",
        &path(&dir, "instance.json"),
        "--eps",
        "0.2",
        "--grid-csv",
        csv.to_str().unwrap(),
        "--dump-lp",
        lp.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,q0,q1"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 3);
        assert!((cols[1] + cols[2] - 1.0).abs() < 1e-12);
        // The upper approximation dominates max(0, q1 - q0).
        assert!(cols[0] >= (cols[2] - cols[1]).max(0.0) - 1e-12);
    }
    assert!(!fs::read_to_string(lp).unwrap().is_empty());
}

#[test]
fn grid_cap_env_var() {
    let dir = fixture_dir("example1:0.1");
    let out = Command::new(env!("CARGO_BIN_EXE_persuade"))
        .args(["solve", &path(&dir, "instance.json"), "--eps", "0.01"])
        .env("PERSUADE_GRID_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}

#[test]
fn convert_hypercube() {
    let dir = fixture_dir("appE1:2");
    let out_path = dir.path().join("post.json");
    let out = persuade(&[
        "convert",
        &path(&dir, "instance.json"),
        &path(&dir, "scheme.json"),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let file = read(&out_path);
    assert!((file["report"]["ratio"].as_f64().unwrap() - 0.25).abs() < 1e-9);
    assert_eq!(file["report"]["verification"]["valid"], true);
}

#[test]
fn convert_feasible_scheme_keeps_value() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "inst.json",
        &two_state_linf(json!([
            {"kind": "linear", "params": {"coefficients": [0.0, 1.0]}, "bound": 0.8, "mode": "ex_post"},
        ])),
    );
    let scheme = write(
        dir.path(),
        "scheme.json",
        &json!({"support": [[0.8, 0.2], [0.2, 0.8]], "probs": [0.5, 0.5]}),
    );
    let out = persuade(&["convert", &inst, &scheme]);
    assert_eq!(code(&out), 0);
    let file: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(file["report"]["ratio"].as_f64(), Some(1.0));
}

#[test]
fn convert_rejects_invalid_input() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "inst.json",
        &two_state_linf(json!([
            {"kind": "linear", "params": {"coefficients": [0.0, 1.0]}, "bound": 0.5, "mode": "ex_ante"},
        ])),
    );
    let implausible = write(
        dir.path(),
        "scheme.json",
        &json!({"support": [[0.0, 1.0]], "probs": [1.0]}),
    );
    assert_eq!(code(&persuade(&["convert", &inst, &implausible])), 2);
}

#[test]
fn convert_rejects_non_convex() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        dir.path(),
        "inst.json",
        &two_state_linf(json!([
            {
                "kind": "grouped_kl",
                "params": {"partition": [[0], [1]], "scale": -1.0, "references": [0.5, 0.5]},
                "bound": 0.0,
                "mode": "ex_ante",
            },
        ])),
    );
    let scheme = write(
        dir.path(),
        "scheme.json",
        &json!({"support": [[0.5, 0.5]], "probs": [1.0]}),
    );
    let out = persuade(&["convert", &inst, &scheme]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_support_reference_and_perturbation() {
    let dir = fixture_dir("prop3:2,1");
    let inst = path(&dir, "instance.json");
    let out = persuade(&["verify", &inst, &path(&dir, "scheme.json")]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["utility"].as_f64().unwrap() - 0.75).abs() < 1e-12);

    let mut scheme = read(&dir.path().join("scheme.json"));
    let q0 = scheme["support"][0][0].as_f64().unwrap();
    scheme["support"][0][0] = json!(q0 + 0.01);
    scheme["support"][0][1] = json!(1.0 - q0 - 0.01);
    let perturbed = write(dir.path(), "perturbed.json", &scheme);
    assert_ne!(code(&persuade(&["verify", &inst, &perturbed])), 0);
}

#[test]
fn verify_no_revelation_without_constraints() {
    let dir = TempDir::new().unwrap();
    let inst = write(dir.path(), "inst.json", &two_state_linf(json!([])));
    let scheme = write(
        dir.path(),
        "scheme.json",
        &json!({"support": [[0.5, 0.5]], "probs": [1.0]}),
    );
    assert_eq!(
        code(&persuade(&["verify", &inst, &scheme, "--tol", "1e-12"])),
        0
    );
}

#[test]
fn fixture_verify_commands() {
    let out = persuade(&["fixture", "example1:0.16666666666666666", "--verify"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = persuade(&["fixture", "appE3:2", "--verify"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let gap = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "gap")
        .unwrap()["measured"]
        .as_f64()
        .unwrap();
    assert!((gap - 3.0).abs() < 1e-9);
    assert_eq!(code(&persuade(&["fixture", "bogus"])), 1);
}

#[test]
fn fixture_files_round_trip_bit_exactly() {
    let dir = fixture_dir("prop3:3,2");
    let text = fs::read_to_string(dir.path().join("instance.json")).unwrap();
    let inst: ProblemInstance = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&inst).unwrap() + "\n", text);
    let text = fs::read_to_string(dir.path().join("scheme.json")).unwrap();
    let scheme: SignalingScheme = serde_json::from_str(&text).unwrap();
    let again: SignalingScheme =
        serde_json::from_str(&serde_json::to_string(&scheme).unwrap()).unwrap();
    for (a, b) in scheme.probs().iter().zip(again.probs()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (p, q) in scheme.support().iter().zip(again.support()) {
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let dir = fixture_dir("appE2:3");
    let inst = path(&dir, "instance.json");
    let a = persuade(&["solve", &inst, "--eps", "0.1", "--seed", "7"]);
    let b = persuade(&["solve", &inst, "--eps", "0.1", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}
