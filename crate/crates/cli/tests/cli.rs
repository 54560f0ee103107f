use std::path::Path;
use std::process::{Command, Output};

fn peps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_soare(dir: &Path) -> String {
    let path = dir.join("soare.json");
    let out = peps(&["gen-instance", "--kind", "soare", "--omega", "0.3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_string()
}

fn without_wall_ms(csv: &[u8]) -> Vec<String> {
    String::from_utf8(csv.to_vec())
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_soare(dir.path());
    for strategy in ["peps", "lints", "lingame", "fixed"] {
        let args = ["run", "--instance", &inst, "--strategy", strategy, "-T", "200", "--seed", "11"];
        let a = peps(&args);
        let b = peps(&args);
        assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
        let rows = without_wall_ms(&a.stdout);
        assert_eq!(rows[0], "instance_id,strategy,seed,t,posterior_confidence,z_hat_correct,rejections_cumulative");
        assert_eq!(rows.len(), 21);
        assert_eq!(rows, without_wall_ms(&b.stdout), "{strategy}");
    }
    let c = peps(&["run", "--instance", &inst, "-T", "200", "--seed", "12"]);
    let a = peps(&["run", "--instance", &inst, "-T", "200", "--seed", "11"]);
    assert_ne!(without_wall_ms(&a.stdout), without_wall_ms(&c.stdout));
}

#[test]
fn strategy_options_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_soare(dir.path());
    let out = peps(&[
        "run",
        "--instance",
        &inst,
        "-T",
        "50",
        "--stride",
        "25",
        "--strategy-config",
        r#"{"learner": "hedge", "eta_lambda": 0.5, "label": "peps-hedge"}"#,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.contains(",peps-hedge,")));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_soare(dir.path());
    let out = peps(&["run", "--instance", &inst, "--strategy", "ucb"]);
    assert_eq!(out.status.code(), Some(2));
    let out = peps(&["run", "--instance", &inst, "--strategy-config", r#"{"unknown_key": 1}"#]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    let out = peps(&["tau-star", "--instance", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "dim": 2, "arms": [[1.0, 0.0], [0.0, 1.0]], "targets": {"kind": "explicit", "vectors": [[1.0], [0.0]]}, "theta_star": [1.0, 0.0], "noise_std": 1.0}"#).unwrap();
    let out = peps(&["gdesign", "--instance", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tau_star_and_gdesign_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_soare(dir.path());
    let out = peps(&["tau-star", "--instance", &inst]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lambda: Vec<f64> = serde_json::from_value(doc["lambda_star"].clone()).unwrap();
    assert_eq!(lambda.len(), 3);
    assert!((lambda.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(doc["tau_star"].as_f64().unwrap() > 0.0);

    let out = peps(&["gdesign", "--instance", &inst]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lev = doc["max_leverage"].as_f64().unwrap();
    assert!((lev - 2.0).abs() < 2e-3, "{lev}");
}

#[test]
fn gen_instance_is_deterministic() {
    let a = peps(&["gen-instance", "--kind", "sphere", "-d", "4", "--n-arms", "9", "--seed", "5"]);
    let b = peps(&["gen-instance", "--kind", "sphere", "-d", "4", "--n-arms", "9", "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = peps(&["gen-instance", "--kind", "topk", "-d", "5", "-k", "2"]);
    assert!(c.status.success());
}

#[test]
fn bench_writes_outputs_and_plot_redraws() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{
  "instance": {"source": "soare", "omega": 0.3},
  "strategies": [{"strategy": "peps"}, {"strategy": "fixed", "lambda": "tau_star"}],
  "T_max": 100,
  "repetitions": 3,
  "master_seed": 4,
  "mc_draws": 200
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = peps(&["bench", "--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "errors.csv", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("strategy"));
    assert!(table.contains("fixed"));

    let plots = dir.path().join("plots");
    let out = peps(&["plot", "--in", out_dir.join("metrics.csv").to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}
