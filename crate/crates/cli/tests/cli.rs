use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn speclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speclab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
    "model": {"seed": 3, "vocab_size": 8, "context_order": 1, "agreement": 0.7},
    "decode": {"mode": "sampling", "max_new_tokens": 32, "prompt_len": 4, "trials": 2, "base_seed": 1},
    "gamma_list": [0, 2, 4],
    "device": "a100"
}"#;

#[test]
fn sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("r.csv");
    let res = speclab(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma,tokens_per_sec,tar,speedup");
    assert!(
        lines[1].starts_with("0,") && lines[1].ends_with(",,1.00"),
        "{}",
        lines[1]
    );
    assert_eq!(lines.len(), 4);
}

#[test]
fn seed_override_changes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        if !seed.is_empty() {
            args.extend(["--seed", seed]);
        }
        assert!(speclab(&args).status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
        v
    };
    let base = run("a.json", "");
    let other = run("b.json", "99");
    assert_eq!(base["metadata"]["base_seed"], 1);
    assert_eq!(other["metadata"]["base_seed"], 99);
    assert_ne!(
        base["metadata"]["config_hash"],
        other["metadata"]["config_hash"]
    );
}

#[test]
fn unknown_format_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let res = speclab(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("r.xml").to_str().unwrap(),
        "--format",
        "xml",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_error_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &SMALL.replace("\"trials\": 2", "\"trials\": 0"));
    let res = speclab(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("decode.trials"));
}

#[test]
fn missing_config_is_io_error() {
    let res = speclab(&[
        "sweep",
        "--config",
        "/nonexistent/c.json",
        "--out",
        "/tmp/x.json",
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let res = speclab(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        "/nonexistent/dir/r.json",
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn compare_shipped_profiles() {
    let res = speclab(&["compare", "--gamma", "4"]);
    assert!(res.status.success());
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let ratio = report["ratios"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["numerator"] == "hades" && r["denominator"] == "a100")
        .unwrap();
    assert!((ratio["rate_ratio"].as_f64().unwrap() - 6.99).abs() < 0.01);
}

#[test]
fn compare_needs_two_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(
        &path,
        r#"[{"name":"a","t_draft_step":1,"t_target_step":1,"t_verify_per_token":1e-6,"power_watts":1}]"#,
    )
    .unwrap();
    let res = speclab(&[
        "compare",
        "--profiles",
        path.to_str().unwrap(),
        "--gamma",
        "2",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn verify_gamma_zero_only() {
    let res = speclab(&["verify", "--gammas", "0", "--mc-steps", "20000"]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("[PASS]")).count(),
        5
    );
}

#[test]
fn amdahl_table() {
    let res = speclab(&["amdahl", "--fraction", "0.1", "--speedup", "6.99"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("0.1,6.99,1.0937"));
    let res = speclab(&["amdahl", "--fraction", "1.5"]);
    assert_eq!(res.status.code(), Some(2));
}
