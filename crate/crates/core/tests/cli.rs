use std::path::Path;
use std::process::{Command, Output};

fn edffluid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edffluid")).args(args).env_remove("EDFFLUID_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SIM_CONFIG: &str = r#"{
    "model": {"lambda": 1.5, "mu": 1.0, "patience": {"kind": "exponential", "rate": 0.5},
              "initial_credits": [1.0, 2.5]},
    "experiment": {"T": 20.0},
    "seeds": {"master": 5}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_both_csvs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", SIM_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = edffluid(&["simulate", "--config", &cfg, "--seed", "11", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["events.csv", "observables.csv"] {
        let a = std::fs::read(out_a.join(f)).unwrap();
        assert_eq!(a, std::fs::read(out_b.join(f)).unwrap(), "{f}");
    }
    let events = std::fs::read_to_string(out_a.join("events.csv")).unwrap();
    assert_eq!(events.lines().next(), Some("time,kind,customer_id,deadline"));
    assert!(events.lines().count() > 10);
    let obs = std::fs::read_to_string(out_a.join("observables.csv")).unwrap();
    assert_eq!(obs.lines().next(), Some("t,Q,P,S,X,t1"));
}

#[test]
fn simulate_det_case_uses_scaled_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "det.json",
        r#"{"model": {"lambda": 2.0, "mu": 1.0, "det_case": {"d": 2.0}},
            "experiment": {"n_list": [3], "T": 1.0}}"#,
    );
    let out = dir.path().join("o");
    let o = edffluid(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let events = std::fs::read_to_string(out.join("events.csv")).unwrap();
    let initial = events.lines().filter(|l| l.starts_with("0,arrival,")).count();
    assert_eq!(initial, 4);
    assert!(events.lines().nth(1).unwrap().ends_with(",6"));
}

#[test]
fn missing_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &SIM_CONFIG.replace(r#""lambda": 1.5, "#, ""));
    let o = edffluid(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &SIM_CONFIG.replace(r#""T": 20.0"#, r#""T": 20.0, "tee": 1"#));
    let o = edffluid(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tee"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "neg.json", &SIM_CONFIG.replace("1.5", "-1.5"));
    let o = edffluid(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = edffluid(&["simulate", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fluid_det_edf_rows() {
    let o = edffluid(&["fluid", "--case", "det-edf", "--lambda", "2", "--mu", "1", "--d", "2", "--t-max", "5", "--dt", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,Q_fluid,P_fluid,r_bar");
    assert_eq!(lines.len(), 12);
    assert!(lines.contains(&"3,4,0,0"), "{text}");
    assert!(lines.contains(&"0.5,1.5,0,1.5"));
}

#[test]
fn fluid_mginf_rows_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sub/mginf.csv");
    let o = edffluid(&[
        "fluid", "--case", "mginf", "--lambda", "0.5", "--alpha", r#"{"kind":"exponential","rate":1.0}"#,
        "--t-max", "2", "--dt", "0.25", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,congestion,workload,served"));
    assert!(lines.next().unwrap().starts_with("0,1,"));
}

#[test]
fn fluid_rejects_bad_arguments() {
    let o = edffluid(&["fluid", "--case", "det-edf", "--lambda", "2", "--mu", "1", "--d", "2", "--t-max", "5", "--dt", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = edffluid(&["fluid", "--case", "det-edf", "--lambda", "2", "--mu", "1", "--d", "2", "--t-max", "5", "--dt", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = edffluid(&["fluid", "--case", "det-edf", "--lambda", "0.5", "--mu", "1", "--d", "2", "--t-max", "5", "--dt", "1"]);
    assert_eq!(o.status.code(), Some(2), "overloaded regime required");
    let o = edffluid(&["fluid", "--case", "mginf", "--lambda", "0.5", "--t-max", "5", "--dt", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = edffluid(&["fluid", "--case", "nope", "--lambda", "1", "--t-max", "5", "--dt", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn transport_check_cases() {
    let o = edffluid(&["transport-check", "--case", "pure-translation", "--tol", "1e-6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("case,phi,t,residual,tol,pass"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
    let o = edffluid(&["transport-check", "--case", "no-such-case"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["pure-translation", "point-mass-sources", "fluid-edf-source", "zero-drift"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn converge_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "smoke.json",
        r#"{"model": {"lambda": 2.0, "mu": 1.0, "det_case": {"d": 2.0}},
            "experiment": {"n_list": [10], "reps": 2, "T": 5.0, "pairing_points": 5, "lemma_reps": 4},
            "seeds": {"master": 1}}"#,
    );
    let out = dir.path().join("run");
    let o = edffluid(&["--threads", "2", "converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("n=10 reps=2"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    let metrics: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert!(rows.iter().all(|r| r.starts_with("10,")));
    for m in ["Qbar", "Pbar", "t1bar", "omega0bar", "tau0bar"] {
        assert_eq!(metrics.iter().filter(|x| **x == m).count(), 1, "{m}");
    }
    for f in ["meta.json", "paths_n10.csv", "fluid.csv", "lemma.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn converge_pure_delay_and_failed_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "mg.json",
        r#"{"model": {"lambda": 0.5, "patience": {"kind": "exponential", "rate": 1.0}},
            "mode": "pure_delay",
            "experiment": {"n_list": [5], "reps": 3, "T": 2.0, "tolerance": 1e-9}}"#,
    );
    let out = dir.path().join("mg");
    let o = edffluid(&["converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "an impossible tolerance fails its flag");
    assert!(stderr(&o).contains("FAIL congestion_median_within"));
    let fluid = std::fs::read_to_string(out.join("fluid.csv")).unwrap();
    assert_eq!(fluid.lines().next(), Some("t,congestion,workload,served"));
}

#[test]
fn help_documents_config_keys() {
    for cmd in ["converge", "simulate"] {
        let o = edffluid(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        for key in [
            "model.lambda", "model.mu", "model.patience", "model.initial_credits", "model.det_case.d", "mode",
            "experiment.n_list", "experiment.reps", "experiment.T", "experiment.grid_step",
            "experiment.pairing_points", "experiment.tolerance", "experiment.lemma_reps", "seeds.master",
            "seeds.rule", "output.directory",
        ] {
            assert!(text.contains(key), "{cmd} --help lacks {key}");
        }
    }
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_edffluid"))
        .args(["transport-check", "--case", "zero-drift"])
        .env("EDFFLUID_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_edffluid"))
        .args(["--threads", "8", "transport-check", "--case", "zero-drift"])
        .env("EDFFLUID_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
