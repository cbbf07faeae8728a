//! End-to-end exercises of the `reachcert` binary: exit codes, report files,
//! and the synthesize -> verify loop.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reachcert"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).expect("write test input");
    path
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exited normally")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const ZERO_BC4: &str = r#"{
  "condition": "BC4",
  "scalars": { "p": 0.0, "lambda": 0.9999 },
  "certificates": {
    "h": { "kind": "polynomial", "dim": 2, "degree": 0, "basis": "monomial_graded_lex", "parameters": [0.0] }
  }
}"#;

#[test]
fn verify_certified_violated_and_inconclusive_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write(dir.path(), "zero.json", ZERO_BC4);

    // h = 0 trivially certifies p = 0
    let out = bin()
        .args(["verify", "--problem", "ex3", "--resolution", "0.1"])
        .arg("--condition")
        .arg(&zero)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // the same certificate cannot reach p = 0.6; the counterexample lies in X0
    let hopeless = write(dir.path(), "zero_p06.json", &ZERO_BC4.replace("\"p\": 0.0", "\"p\": 0.6"));
    let report_path = dir.path().join("verdict.json");
    let out = bin()
        .args(["verify", "--problem", "ex3", "--resolution", "0.1"])
        .arg("--condition")
        .arg(&hopeless)
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["verdict"]["status"], "Violated");
    let init_clause = report["verdict"]["clauses"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["label"] == "h_init")
        .expect("initial-set clause present");
    let ce = &init_clause["counterexamples"][0];
    let (x1, x2) = (ce["x"][0].as_f64().unwrap(), ce["x"][1].as_f64().unwrap());
    // ex3's X0 is the union of two boxes at |x1| in [0.1, 0.15], |x2| <= 0.1
    assert!((0.1..=0.15).contains(&x1.abs()) && x2.abs() <= 0.1, "({x1}, {x2}) outside X0");
    assert!(ce["residual"].as_f64().unwrap() > 0.0);

    // a certificate certified at 0.025 is inconclusive on the 0.05 grid alone
    // (no violation exists, so this cannot flip to Violated for any seed)
    let trained = fixture("ex3_bc4_poly2.json");
    let out = bin()
        .args(["verify", "--problem", "ex3", "--resolution", "0.05", "--seed", "99"])
        .arg("--condition")
        .arg(&trained)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // adding a refinement pass settles it
    let out = bin()
        .args([
            "verify",
            "--problem",
            "ex3",
            "--resolution",
            "0.05",
            "--resolution",
            "0.025",
            "--seed",
            "99",
        ])
        .arg("--condition")
        .arg(&trained)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn verify_diagnoses_malformed_input_with_exit_64() {
    let dir = tempfile::tempdir().unwrap();

    // unknown field
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"condition":"BC4","scalars":{},"certificates":{},"certs":{}}"#,
    );
    let out = bin().args(["verify", "--problem", "ex3"]).arg("--condition").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("certs"), "diagnostic names the field: {}", stderr(&out));

    // missing role for the condition
    let missing =
        write(dir.path(), "missing.json", r#"{"condition":"BC4","scalars":{"p":0.5,"lambda":0.9999},"certificates":{}}"#);
    let out =
        bin().args(["verify", "--problem", "ex3"]).arg("--condition").arg(&missing).output().unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("'h'"), "diagnostic names the role: {}", stderr(&out));

    // unknown problem name
    let zero = write(dir.path(), "zero.json", ZERO_BC4);
    let out = bin().args(["verify", "--problem", "ex9"]).arg("--condition").arg(&zero).output().unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("ex9"));
}

#[test]
fn verify_resource_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let zero = write(dir.path(), "zero.json", ZERO_BC4);
    let out = bin()
        .args(["verify", "--problem", "ex3", "--resolution", "0.1", "--max-residual-evals", "10"])
        .arg("--condition")
        .arg(&zero)
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("resource limit"));
}

#[test]
fn synthesize_output_feeds_back_into_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cert_path = dir.path().join("cert.json");
    let telemetry_path = dir.path().join("telemetry.jsonl");
    let out = bin()
        .args([
            "synthesize",
            "--problem",
            "ex3",
            "--condition",
            "BC4",
            "--template",
            "poly:2",
            "--p",
            "0.6",
            "--seed",
            "7",
            "--restarts",
            "2",
            "--max-iterations",
            "6",
            "--samples-per-clause",
            "128",
            "--learner-steps",
            "250",
            "--resolution",
            "0.05",
            "--resolution",
            "0.025",
        ])
        .arg("--out")
        .arg(&cert_path)
        .arg("--telemetry")
        .arg(&telemetry_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // telemetry is one JSON object per iteration
    let telemetry = fs::read_to_string(&telemetry_path).unwrap();
    assert!(!telemetry.is_empty());
    for line in telemetry.lines() {
        let log: serde_json::Value = serde_json::from_str(line).expect("telemetry line parses");
        assert!(log["iteration"].is_u64());
        assert!(log["loss_after"].is_f64() || log["loss_after"].is_u64());
    }

    // the emitted condition file round-trips through the verifier
    let out = bin()
        .args(["verify", "--problem", "ex3", "--resolution", "0.025"])
        .arg("--condition")
        .arg(&cert_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn synthesize_config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    // partial config: unset fields fall back to library defaults
    let config = write(
        dir.path(),
        "cegis.json",
        r#"{
  "max_iterations": 1,
  "restarts": 1,
  "samples_per_clause": 8,
  "learner": { "steps": 5 },
  "resolutions": [0.2],
  "seed": 123
}"#,
    );
    let run = |extra: &[&str]| {
        let telemetry = dir.path().join(format!("tel{}.jsonl", extra.len()));
        let out = bin()
            .args(["synthesize", "--problem", "ex3", "--condition", "BC4", "--template", "poly:1"])
            .arg("--config")
            .arg(&config)
            .args(extra)
            .arg("--telemetry")
            .arg(&telemetry)
            .output()
            .unwrap();
        assert_ne!(code(&out), 64, "stderr: {}", stderr(&out));
        fs::read_to_string(&telemetry).unwrap()
    };
    let from_config = run(&[]);
    let flag_override = run(&["--seed", "123"]);
    // same seed through either path: bit-identical telemetry
    assert_eq!(from_config, flag_override);
    let different_seed = run(&["--seed", "9"]);
    assert_ne!(from_config, different_seed, "--seed must override the config file");

    // unknown config fields are rejected with a diagnostic
    let bad = write(dir.path(), "bad.json", r#"{"max_iters": 3}"#);
    let out = bin()
        .args(["synthesize", "--problem", "ex3", "--condition", "BC4"])
        .arg("--config")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("max_iters"), "stderr: {}", stderr(&out));
}

#[test]
fn synthesize_rejects_unknown_condition() {
    let out = bin()
        .args(["synthesize", "--problem", "ex3", "--condition", "BC9"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("BC9"));
}

#[test]
fn estimate_deterministic_hit_reports_certainty() {
    let dir = tempfile::tempdir().unwrap();
    // drift 0.2 per step, noise ignored: every run from 0 hits [0.5, 1]
    let problem = write(
        dir.path(),
        "drift.json",
        r#"{
  "system": { "dim": 1, "dynamics": ["x1 + 0.2"] },
  "disturbance": { "kind": "uniform_box", "support": [[-0.01, 0.01]] },
  "regions": {
    "init": { "kind": "box", "bounds": [[-0.1, 0.1]] },
    "safe": { "kind": "box", "bounds": [[-1.0, 1.0]] },
    "target": { "kind": "box", "bounds": [[0.5, 1.0]] },
    "working_box": [[-2.0, 2.0]]
  },
  "threshold": 0.9
}"#,
    );
    let out = bin()
        .args(["estimate", "--x0", "0.0", "--n", "1000", "--horizon", "50", "--seed", "3"])
        .arg("--problem")
        .arg(&problem)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["estimate"]["p_hat"].as_f64().unwrap(), 1.0);
    assert_eq!(report["estimate"]["hi"].as_f64().unwrap(), 1.0);
    assert_eq!(report["estimate"]["N"].as_u64().unwrap(), 1000);
}

#[test]
fn estimate_grid_mode_reports_min_lower_bound() {
    let out = bin()
        .args([
            "estimate",
            "--problem",
            "walk",
            "--init-grid",
            "3",
            "--n",
            "2000",
            "--horizon",
            "200",
            "--seed",
            "11",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 3, "walk init is an interval; 3 grid vertices");
    let min_lo = points
        .iter()
        .map(|p| p["estimate"]["lo"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report["min_lo"].as_f64().unwrap(), min_lo);
}

#[test]
fn convert_matches_closed_forms_and_involutes() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(
        dir.path(),
        "v.json",
        r#"{"kind":"polynomial","dim":2,"degree":2,"basis":"monomial_graded_lex","parameters":[1.0,0.0,0.0,0.5,0.0,0.5]}"#,
    );
    let out = bin()
        .args(["convert", "aras-to-bc4restricted", "--epsilon", "0.1", "--p", "0.5"])
        .arg("--cert")
        .arg(&v)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let derived: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let lambda_min = derived["lambda_min"].as_f64().unwrap();
    assert!((lambda_min - 1.0 / 1.05).abs() < 1e-12);

    // bc5-transform applied twice restores the original certificates
    let cond = write(
        dir.path(),
        "bc5.json",
        r#"{
  "condition": "BC5",
  "scalars": { "p": 0.5 },
  "certificates": {
    "h1": { "kind": "polynomial", "dim": 2, "degree": 1, "basis": "monomial_graded_lex", "parameters": [0.25, 0.5, -0.5] },
    "h2": { "kind": "polynomial", "dim": 2, "degree": 0, "basis": "monomial_graded_lex", "parameters": [0.75] }
  }
}"#,
    );
    let once = dir.path().join("once.json");
    let twice = dir.path().join("twice.json");
    let out = bin()
        .args(["convert", "bc5-transform"])
        .arg("--condition")
        .arg(&cond)
        .arg("--out")
        .arg(&once)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let out = bin()
        .args(["convert", "bc5-transform"])
        .arg("--condition")
        .arg(&once)
        .arg("--out")
        .arg(&twice)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let original: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&cond).unwrap()).unwrap();
    let restored: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&twice).unwrap()).unwrap();
    assert_eq!(original["certificates"], restored["certificates"]);

    // out-of-range scalars surface the violated bound
    let out = bin()
        .args(["convert", "aras-to-mras", "--epsilon=-1", "--lambda", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
    assert!(stderr(&out).contains("epsilon"));
}

#[test]
fn bench_empty_selector_emits_header_only() {
    let out = bin().arg("bench").output().unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout, "example,condition,template,p,scalars,status,wall_time,seed\n");
}

#[test]
fn bench_records_cells_in_canonical_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    // tiny budget: the point is the matrix shape, not feasibility
    let out = bin()
        .args([
            "bench",
            "--example",
            "ex3",
            "--condition",
            "BC4",
            "--condition",
            "AS",
            "--template",
            "poly:2",
            "--p",
            "0.6",
            "--max-iterations",
            "1",
            "--restarts",
            "1",
            "--learner-steps",
            "5",
            "--samples-per-clause",
            "16",
            "--resolution",
            "0.1",
        ])
        .arg("--out")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus two cells: {csv}");
    assert_eq!(lines[0], "example,condition,template,p,scalars,status,wall_time,seed");
    // canonical order sorts AS before BC4 regardless of flag order
    assert!(lines[1].starts_with("ex3,AS,poly2,0.6,"));
    assert!(lines[2].starts_with("ex3,BC4,poly2,0.6,"));
    for line in &lines[1..] {
        let status = line.split(',').nth(5).unwrap();
        assert!(
            ["certified", "violated", "inconclusive", "failed"].contains(&status)
                || status.starts_with("error"),
            "unexpected status in {line}"
        );
    }
}
