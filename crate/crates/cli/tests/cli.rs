use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn shadows(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadows"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn experiment(channel: Value) -> Value {
    json!({
        "n": 1,
        "state": {"kind": "named", "name": "zero"},
        "ensemble": {"kind": "clifford_global", "n": 1},
        "channel": channel,
        "observables": ["Z", "X"],
        "epsilon": 0.2,
        "delta": 0.1,
        "seed": 11
    })
}

fn run_estimate(dir: &Path, config: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join("out");
    let mut args = vec![
        "estimate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (shadows(&args), out)
}

#[test]
fn noiseless_z_on_zero_within_epsilon() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "cfg.json",
        &experiment(json!({"kind": "identity", "n": 1})),
    );
    let (out, out_dir) = run_estimate(dir.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let z = &report["estimates"][0];
    assert_eq!(z["observable_id"], "Z");
    assert!((z["value"].as_f64().unwrap() - 1.0).abs() < 0.2);
    assert_eq!(z["K"], 8);
    assert_eq!(z["N"], 2550);
    assert_eq!(report["seed"], 11);
    assert_eq!(report["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn reports_are_deterministic_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "cfg.json",
        &experiment(json!({"kind": "amplitude_damping", "n": 1, "params": {"p": 0.5}})),
    );
    let read = |out: &Path| fs::read(out.join("report.json")).unwrap();
    let (a, out) = run_estimate(dir.path(), &cfg, &["--threads", "1"]);
    assert!(a.status.success());
    let first = read(&out);
    let (b, out) = run_estimate(dir.path(), &cfg, &["--threads", "3"]);
    assert!(b.status.success());
    assert_eq!(first, read(&out));
    let (c, out) = run_estimate(dir.path(), &cfg, &["--seed", "12"]);
    assert!(c.status.success());
    let other = read(&out);
    assert_ne!(first, other);
    let other: Value = serde_json::from_slice(&other).unwrap();
    assert_eq!(other["seed"], 12);
}

#[test]
fn emitted_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "cfg.json",
        &experiment(json!({"kind": "dephasing", "n": 1})),
    );
    let (out, out_dir) = run_estimate(dir.path(), &cfg, &["--seed", "5"]);
    assert!(out.status.success());
    let report = fs::read(out_dir.join("report.json")).unwrap();
    let resolved = dir.path().join("resolved.json");
    fs::copy(out_dir.join("config.json"), &resolved).unwrap();
    let (again, out_dir) = run_estimate(dir.path(), &resolved, &[]);
    assert!(again.status.success());
    assert_eq!(report, fs::read(out_dir.join("report.json")).unwrap());
}

#[test]
fn full_depolarizer_is_rejected_with_beta() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        dir.path(),
        "cfg.json",
        &experiment(json!({"kind": "depolarizing", "n": 1, "params": {"f": 0.0}})),
    );
    let (out, _) = run_estimate(dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shadow channel not invertible"), "{err}");
    assert!(err.contains("beta = 1"), "{err}");
}

#[test]
fn malformed_config_reports_path_and_position() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"n\": 1,\n  \"state\": ,\n}").unwrap();
    let (out, _) = run_estimate(dir.path(), &path, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.json"), "{err}");
    assert!(err.contains("line 3 column"), "{err}");
}

#[test]
fn missing_config_is_a_config_error() {
    let out = shadows(&["plan"]);
    assert_eq!(out.status.code(), Some(2));
    let out = shadows(&["channel-info", "--config", "/nonexistent/channel.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_and_shadow_outputs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = experiment(json!({"kind": "amplitude_damping", "n": 1, "params": {"p": 0.6}}));
    cfg["trials"] = json!(3);
    cfg["snapshots_per_bucket"] = json!(10);
    let cfg = write_json(dir.path(), "cfg.json", &cfg);
    let shadows_path = dir.path().join("shadows.jsonl");
    let (out, out_dir) = run_estimate(
        dir.path(),
        &cfg,
        &["--shadows-out", shadows_path.to_str().unwrap()],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut rdr = csv::Reader::from_path(out_dir.join("estimates.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "trial");
    assert_eq!(&headers[2], "observable_id");
    assert_eq!(rdr.records().count(), 6);

    let text = fs::read_to_string(&shadows_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 80);
    let header: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(header["header"]["count"], 80);
    assert_eq!(header["header"]["state"]["name"], "zero");
    let first: Value = serde_json::from_str(lines[1]).unwrap();
    assert!(first["b"].is_string());
}

#[test]
fn noiseless_post_processing_is_biased_under_damping() {
    let dir = TempDir::new().unwrap();
    let mut cfg = experiment(json!({"kind": "amplitude_damping", "n": 1, "params": {"p": 0.5}}));
    cfg["observables"] = json!(["Z"]);
    cfg["snapshots_per_bucket"] = json!(5000);
    cfg["post_processing"] = json!("noiseless");
    let cfg = write_json(dir.path(), "cfg.json", &cfg);
    let (out, out_dir) = run_estimate(dir.path(), &cfg, &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let v = report["estimates"][0]["value"].as_f64().unwrap();
    assert!((v - 0.5).abs() < 0.1, "naive estimate {v}");
}

#[test]
fn channel_info_predicates() {
    let dir = TempDir::new().unwrap();
    let info = |channel: Value| {
        let p = write_json(dir.path(), "ch.json", &channel);
        stdout_json(&shadows(&["channel-info", "--config", p.to_str().unwrap()]))
    };
    let deph = info(json!({"kind": "dephasing", "n": 2}));
    assert_eq!(deph["inconsequential"], true);
    assert_eq!(deph["lambda_n"], true);
    assert!((deph["beta"].as_f64().unwrap() - 4.0).abs() < 1e-12);

    let ad = info(json!({"channel": {"kind": "amplitude_damping", "n": 1, "params": {"p": 0.5}}}));
    assert_eq!(ad["inconsequential"], false);
    assert!((ad["f"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-12);
    assert_eq!(ad["f_bounds"]["within"], true);

    let reset = info(json!({"kind": "reset", "n": 2}));
    assert_eq!(reset["lambda_n"], false);
    assert_eq!(reset["lambda_n_failures"], json!(["01", "10", "11"]));

    let full = info(json!({"kind": "depolarizing", "n": 1, "params": {"f": 0.0}}));
    assert_eq!(full["invertible"], false);
}

#[test]
fn plan_reproduces_depolarizing_pauli_factors() {
    let dir = TempDir::new().unwrap();
    let dep = json!({"kind": "depolarizing", "n": 1, "params": {"f": 0.5}});
    let scenario = json!({
        "n": 3,
        "channel": {"kind": "product", "factors": [dep, dep, dep]},
        "observables": ["XII", "XZI", "XYZ"],
        "eps": 0.1,
        "delta": 0.05
    });
    let p = write_json(dir.path(), "plan.json", &scenario);
    let plan = stdout_json(&shadows(&["plan", "--config", p.to_str().unwrap()]));
    let factors: Vec<f64> = plan["observables"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seminorm_sq"].as_f64().unwrap())
        .collect();
    for (got, want) in factors.iter().zip([12.0, 144.0, 1728.0]) {
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }
    assert_eq!(plan["bound_source"], "depolarizing");
    assert_eq!(plan["ensemble"], "clifford_product");
    assert_eq!(plan["N"], (34.0f64 * 1728.0 / 0.01).ceil() as u64);
    assert_eq!(plan["K"], (2.0f64 * (6.0f64 / 0.05).ln()).ceil() as u64);
}

#[test]
fn plan_global_from_trace_values() {
    let dir = TempDir::new().unwrap();
    let scenario = json!({
        "n": 2,
        "channel": {"kind": "identity", "n": 2},
        "observables": [4.0, {"tr_o2": 2.0}],
        "M": 10,
        "eps": 0.5,
        "delta": 0.1
    });
    let p = write_json(dir.path(), "plan.json", &scenario);
    let out_dir = dir.path().join("plans");
    let plan = stdout_json(&shadows(&[
        "plan",
        "--config",
        p.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(plan["ensemble"], "clifford_global");
    assert_eq!(plan["bound_source"], "global3design");
    // Noiseless global: 3 tr(O^2) upper bound on the squared seminorm.
    assert!((plan["observables"][0]["seminorm_sq"].as_f64().unwrap() - 12.0).abs() < 1e-12);
    assert!(out_dir.join("plan.json").exists());
}

#[test]
fn seminorm_matches_named_values() {
    let dir = TempDir::new().unwrap();
    let run = |channel: Value, observable: &str| {
        let cfg = json!({
            "ensemble": {"kind": "clifford_global", "n": 1},
            "channel": channel,
            "observable": observable
        });
        let p = write_json(dir.path(), "sn.json", &cfg);
        stdout_json(&shadows(&["seminorm", "--config", p.to_str().unwrap()]))
    };
    let z = run(json!({"kind": "identity", "n": 1}), "Z");
    assert!((z["value_squared"].as_f64().unwrap() - 3.0).abs() < 1e-10);
    assert!(z["oracle_discrepancy"].as_f64().unwrap() < 1e-8);
    let x = run(
        json!({"kind": "amplitude_damping", "n": 1, "params": {"p": 0.5}}),
        "X",
    );
    assert!((x["value_squared"].as_f64().unwrap() - 12.0).abs() < 1e-8);
    assert!(x["method"].is_string());
}

#[test]
fn verify_passes() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("v");
    let out = shadows(&[
        "verify",
        "--samples",
        "2000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["all_passed"], true);
    assert!(!report["klocal_identity_cell"]
        .as_array()
        .unwrap()
        .is_empty());
    assert!(out_dir.join("verify.json").exists());
}
