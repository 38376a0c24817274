use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn thinfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinfb"))
        .args(args)
        .env("THINFB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("error line");
    serde_json::from_str(line).expect("error JSON on stderr")
}

#[test]
fn solve_writes_snapshot_stats_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = thinfb(&["solve", "--profile", "h32", "--h", "2^-5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.f64", "solution.json", "stats.json", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let stats = read_json(&out.join("stats.json"));
    assert_eq!(stats["stats"]["converged"], Value::Bool(true));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["command"], "solve");
    assert_eq!(m["threads"], 1);
    let paths: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    assert!(paths.contains(&"solution.f64") && paths.contains(&"stats.json"));
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = thinfb(&[
            "analyze", "growth", "--h", "2^-6", "--at", "0,0", "--window", "2^-3:2^-2", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["growth.json", "growth.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let (ma, mb) = (read_json(&a.join("manifest.json")), read_json(&b.join("manifest.json")));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    let fit = read_json(&a.join("growth.json"));
    let k = fit["rate"].as_f64().unwrap();
    assert!((k - 1.5).abs() < 0.1, "kappa_hat {k}");
    let csv = fs::read_to_string(a.join("growth.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,value"));
    let row = lines.next().unwrap();
    assert!(row.split(',').all(|c| c.contains('e')), "{row}");
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("cfg");
    fs::write(
        &cfg,
        format!(
            "h = \"2^-5\"\nout = {:?}\n[analyze]\nat = [0.0, 0.0]\nwindow = [\"2^-3\", \"2^-2\"]\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = thinfb(&["--config", cfg.to_str().unwrap(), "analyze", "weiss"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["h"], 1.0 / 32.0);
    assert_eq!(m["config"]["window"][1], 0.25);

    let o = thinfb(&["--config", cfg.to_str().unwrap(), "analyze", "weiss", "--h", "2^-6"]);
    assert!(o.status.success());
    let m2 = read_json(&out.join("manifest.json"));
    assert_eq!(m2["config"]["h"], 1.0 / 64.0);
    assert_ne!(m["config_hash"], m2["config_hash"]);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = thinfb(&["solve", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["exit_code"], 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[solve]\nbogus = 1\n").unwrap();
    let o = thinfb(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
}

#[test]
fn unresolvable_radius_is_a_precondition_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = thinfb(&[
        "analyze", "blowup", "--h", "2^-4", "--r", "2^-5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["exit_code"], 3);
    assert!(out.join("error.json").exists());
}

#[test]
fn nonconvergence_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = thinfb(&[
        "solve", "--h", "2^-6", "--max-iters", "2", "--no-nested", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["error"]["kind"], "nonconvergence");
}

#[test]
fn gen_coeffs_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = thinfb(&[
            "gen-coeffs", "--h", "2^-4", "--alpha", "0.6", "--delta0", "0.05", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read_json(&out.join("manifest.json"))
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a["artifacts"], b["artifacts"]);
    let report = read_json(&dir.path().join("a/coefficients.json"));
    assert_eq!(report["bundle"]["seed"], 7);
    assert_eq!(report["condition_n"]["pass"], true);
}

#[test]
fn generated_bundle_can_be_reused() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    let o = thinfb(&["gen-coeffs", "--h", "2^-5", "--seed", "3", "--out", gen.to_str().unwrap()]);
    assert!(o.status.success());
    let bundle = gen.join("coefficients");
    let out = dir.path().join("solve");
    let o = thinfb(&[
        "solve", "--h", "2^-5", "--coeffs", "file", "--coeffs-path", bundle.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = thinfb(&[
        "solve", "--h", "2^-4", "--coeffs-path", bundle.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fb_extract_and_classify_write_gamma_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fb");
    let o = thinfb(&["fb", "extract", "--h", "2^-6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("gamma.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,kappa_hat,regular,nu1"));
    assert_eq!(csv.lines().count(), 2);

    let o = thinfb(&["fb", "classify", "--h", "2^-6", "--alpha", "0.75", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(&out.join("regularity.json"));
    assert_eq!(rep["alpha"], 0.75);
    let o = thinfb(&["fb", "classify", "--h", "2^-6", "--alpha", "0.4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn epi_reports_min_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("epi");
    let o = thinfb(&["epi", "--family", "perturbed-cone", "--count", "2", "--h", "2^-5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("min kappa_hat"));
    let rep = read_json(&out.join("epi.json"));
    assert_eq!(rep["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_runs_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = thinfb(&["verify", "--criteria", "4,9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    let o = thinfb(&["verify", "--criteria", "13"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_thinfb"))
        .args(["verify", "--criteria", "9"])
        .env("THINFB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
