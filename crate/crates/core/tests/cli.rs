use std::path::PathBuf;
use std::process::{Command, Output};

fn fracmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracmin")).args(args).env_remove("FRACMIN_THREADS").output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fracmin-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn kernel_prints_closed_form() {
    let o = fracmin(&["run", "kernel", "--n", "3", "--s", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["n", "s", "sigma", "c_ns", "c_ns_quadrature", "c_circ", "version", "config_hash"]);
    let row = rdr.records().next().unwrap().unwrap();
    let c: f64 = row[3].parse().unwrap();
    assert!((c - 4.18879).abs() < 1e-5, "c_ns = {c}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("c_ns = 4.18879"));
}

#[test]
fn slab_check_vanishes_on_every_boundary() {
    let out = scratch("slab.json");
    let o = fracmin(&["run", "slab-check", "--sigma", "0.1", "--cstar", "5", "--sheets", "6", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    let values = doc["result"]["values"].as_array().unwrap();
    assert_eq!(values.len(), 6);
    assert!(doc["result"]["max_abs"].as_f64().unwrap() <= 1e-8);
    assert!(stdout(&o).starts_with("slab-check"));
}

#[test]
fn invalid_input_exits_two_with_diagnostic() {
    let o = fracmin(&["run", "kernel", "--s", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["error"], "ConfigInvalid");

    let cfg = scratch("bad.json");
    std::fs::write(&cfg, r#"{"command": "kernel", "bogus": 1}"#).unwrap();
    let o = fracmin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    // Newton cannot converge in a single iteration
    let cfg = scratch("toda-bad.json");
    std::fs::write(&cfg, r#"{"command": "toda", "toda": {"domain": {"kind": "disc", "radius": 1.0, "n_r": 8, "n_theta": 16}, "options": {"tol": 1e-10, "step_tol": 1e-10, "max_iterations": 1}}}"#).unwrap();
    let o = fracmin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let diag: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["error"], "NumericalFailure");
}

#[test]
fn reruns_are_byte_identical() {
    let out = scratch("toda.json");
    let mut bodies = Vec::new();
    for _ in 0..2 {
        let o = fracmin(&["run", "toda", "--format", "json", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        bodies.push(std::fs::read(&out).unwrap());
    }
    assert!(bodies[0] == bodies[1]);
}

#[test]
fn flags_override_config_file() {
    let cfg = scratch("cone.json");
    std::fs::write(&cfg, r#"{"command": "cone", "params": {"n": 3}, "cone": {"resolution": 16}, "format": "json"}"#).unwrap();
    let out = scratch("cone-out.json");
    let o = fracmin(&["run", "--config", cfg.to_str().unwrap(), "--n", "4", "--threads", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["result"]["n"], 4);
    assert_eq!(doc["config"]["cone"]["resolution"], 16);
    assert_eq!(doc["result"]["farina"]["contradiction"], true);
}

#[test]
fn threads_env_is_a_fallback() {
    let o = Command::new(env!("CARGO_BIN_EXE_fracmin")).args(["run", "kernel"]).env("FRACMIN_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_fracmin")).args(["run", "kernel", "--threads", "1"]).env("FRACMIN_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn hs_eval_reads_stack_documents() {
    let stack = scratch("flat.json");
    let doc = serde_json::json!({
        "grid": {"dim": 1, "extent": 2.0, "resolution": 81, "periodic": false},
        "sheets": [vec![0.25; 81]],
        "s": 0.8
    });
    std::fs::write(&stack, doc.to_string()).unwrap();
    let o = fracmin(&["run", "hs-eval", "--stack", stack.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let mut count = 0;
    for rec in rdr.records() {
        let v: f64 = rec.unwrap()[2].parse().unwrap();
        assert!(v.abs() <= 1e-8);
        count += 1;
    }
    assert!(count >= 3);
}
