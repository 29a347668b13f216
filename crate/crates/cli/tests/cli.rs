use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TWO_BUS: &str = r#"{"buses":[{"id":1,"load":0},{"id":2,"load":50}],
    "lines":[{"from":1,"to":2,"x":0.1,"limit":100}],
    "gens":[{"bus":1,"a":0.5,"b":10,"c":0,"pmin":0,"pmax":100}]}"#;

fn dcopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcopf")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn central_two_bus_prints_objective() {
    let dir = TempDir::new().unwrap();
    let case = write(dir.path(), "two.json", TWO_BUS);
    let out_dir = dir.path().join("out");
    let out = dcopf(&["solve-central", &case, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("objective 1750.000000"));
    let doc = json(&out_dir.join("solution.json"));
    assert!((doc["objective"].as_f64().unwrap() - 1750.0).abs() < 1e-6);
    assert!((doc["pg"][0].as_f64().unwrap() - 50.0).abs() < 1e-9);
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out_arg = out_dir.to_str().unwrap();
    let infeasible = write(dir.path(), "inf.json", &TWO_BUS.replace("\"load\":50", "\"load\":500"));
    let malformed = write(dir.path(), "bad.json", "{\"buses\": [");
    let invalid = write(dir.path(), "neg.json", &TWO_BUS.replace("\"x\":0.1", "\"x\":-0.1"));

    assert_eq!(code(&dcopf(&["solve-central", &infeasible, "--out", out_arg])), 5);
    assert_eq!(code(&dcopf(&["solve-distributed", &infeasible, "--oracle", "--out", out_arg])), 5);
    assert_eq!(code(&dcopf(&["solve-central", &malformed, "--out", out_arg])), 3);
    let rejected = dcopf(&["solve-central", &invalid, "--out", out_arg]);
    assert_eq!(code(&rejected), 4);
    assert!(String::from_utf8_lossy(&rejected.stderr).contains("lines[0].x"));
    assert_eq!(code(&dcopf(&["solve-distributed", "two_bus", "--alpha=-1", "--out", out_arg])), 4);
    assert_eq!(code(&dcopf(&["solve-distributed", "two_bus", "--rel-tol", "0.1", "--out", out_arg])), 4);
    assert_eq!(code(&dcopf(&["solve-central", "no_such_case.json", "--out", out_arg])), 1);
}

#[test]
fn zero_iterations_write_only_the_initial_state() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = dcopf(&["solve-distributed", "two_bus", "--iters", "0", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("k,res,rel,lambda_1,lambda_2,theta_1,theta_2,pg_1,mu_1_2,mu_2_1"));
    assert!(rows[1].starts_with("0,50,,10,10,0,0,0,0,0"));
    let manifest = json(&out_dir.join("trace_manifest.json"));
    assert_eq!(manifest["columns"].as_array().unwrap().len(), rows[0].split(',').count());
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["iterations"], 0);
    assert_eq!(report["outcome"]["outcome"], "max_iters");
}

#[test]
fn outputs_are_byte_identical_without_timestamps() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, mode: &str| {
        let out_dir = dir.path().join(name);
        let out = dcopf(&[
            "solve-distributed", "five_bus", "--alpha", "0.7", "--beta", "0.03", "--gamma", "0.05", "--delta",
            "0.4", "--iters", "500", "--mode", mode, "--oracle", "--no-timestamp", "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(code(&out) == 0 || code(&out) == 6);
        out_dir
    };
    for mode in ["synchronous", "serial"] {
        let (a, b) = (run(&format!("a_{mode}"), mode), run(&format!("b_{mode}"), mode));
        for file in ["trace.csv", "trace_manifest.json", "report.json", "solution.json"] {
            assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
        }
        assert!(json(&a.join("report.json")).get("wall_time_s").is_none());
    }
    let stamped = dir.path().join("stamped");
    dcopf(&["solve-distributed", "two_bus", "--iters", "5", "--out", stamped.to_str().unwrap()]);
    let report = json(&stamped.join("report.json"));
    assert!(report["wall_time_s"].is_number() && report["generated_unix_s"].is_number());
}

#[test]
fn divergence_keeps_partial_trace() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = dcopf(&[
        "solve-distributed", "three_bus", "--alpha", "50", "--beta", "1", "--gamma", "1", "--delta", "1",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 6);
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["outcome"]["outcome"], "diverged");
    let rows = fs::read_to_string(out_dir.join("trace.csv")).unwrap().lines().count();
    assert_eq!(rows, report["iterations"].as_u64().unwrap() as usize + 2);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("from_config");
    let config = write(
        dir.path(),
        "run.json",
        &format!(
            r#"{{"alpha": 2, "beta": 0.02, "gamma": 0.04, "delta": 0.2, "iters": 7, "no_timestamp": true,
                "out": {:?}}}"#,
            out_dir.to_str().unwrap()
        ),
    );
    assert_eq!(code(&dcopf(&["solve-distributed", "three_bus", "--config", &config, "--iters", "3"])), 0);
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["iterations"], 3);
    assert_eq!(report["params"]["delta"], 0.2);
    assert!(report.get("wall_time_s").is_none());

    let typo = write(dir.path(), "typo.json", r#"{"alpah": 2}"#);
    assert_eq!(code(&dcopf(&["solve-distributed", "three_bus", "--config", &typo])), 3);
}

#[test]
fn rts_congestion_scenario() {
    let dir = TempDir::new().unwrap();
    let central = dir.path().join("central");
    let out = dcopf(&["solve-central", "rts24", "--limit-scale", "0.55", "--out", central.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let sol = json(&central.join("solution.json"));
    let binding = sol["binding_lines"].as_array().unwrap();
    assert_eq!(binding.len(), 2);

    let run = |name: &str, scale: &str| {
        let out_dir = dir.path().join(name);
        let out = dcopf(&[
            "solve-distributed", "rts24", "--limit-scale", scale, "--iters", "50000", "--oracle", "--no-timestamp",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        json(&out_dir.join("report.json"))
    };
    let tight = run("tight", "0.55");
    let loose = run("loose", "1");
    assert_eq!(tight["outcome"]["outcome"], "converged");
    assert_eq!(loose["outcome"]["outcome"], "converged");
    assert_eq!(&tight["comparison"]["binding_lines"].as_array().unwrap().len(), &2);
    for (engine, oracle) in tight["comparison"]["binding_lines"].as_array().unwrap().iter().zip(binding) {
        assert_eq!(engine["from"], oracle["from"]);
        assert_eq!(engine["to"], oracle["to"]);
        assert_eq!(engine["direction"], oracle["direction"]);
        assert!(engine["mu"].as_f64().unwrap() > 0.0);
    }
    assert!(tight["comparison"]["lmp_spread"].as_f64().unwrap() > 1.0);
    assert!(tight["iterations"].as_u64() > loose["iterations"].as_u64());
    let spread = loose["comparison"]["lmp_spread"].as_f64().unwrap();
    assert!(spread <= 1e-3 * loose["comparison"]["lmp_mean"].as_f64().unwrap());
}

#[test]
fn certify_single_point_and_grid() {
    let dir = TempDir::new().unwrap();
    let single = dir.path().join("single");
    let out = dcopf(&["certify", "rts24", "--out", single.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("not certified"));
    let cert = json(&single.join("certificate.json"));
    assert!((cert["spectral_radius"].as_f64().unwrap() - 2.108).abs() < 1e-3);
    assert_eq!(cert["certified"], false);
    assert_eq!(cert["params"]["alpha"], 0.1485);

    let sweep = dir.path().join("sweep");
    let grid = write(
        dir.path(),
        "grid.json",
        r#"{"alpha": [1, 2], "beta": [0.02], "gamma": [0.04], "delta": [0.2, 4]}"#,
    );
    let out = dcopf(&["certify", "three_bus", "--grid", &grid, "--objective", "empirical", "--empirical-tol", "1e-6",
        "--empirical-iters", "3000", "--out", sweep.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let rows = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(sweep.join("certificate.json").exists());

    let log = dir.path().join("log");
    let out = dcopf(&["certify", "two_bus", "--log-grid", "0.01:1:3", "--out", log.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let rows = fs::read_to_string(log.join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 82);
    assert!(rows.lines().nth(1).unwrap().starts_with("0.01,0.01,0.01,0.01,"));
}
