//! The `l2flow` binary end to end: artifacts, subcommands and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"
n = 8
generator = "band_limited"
eps = 0.05
seed = 5
t_final_steps = 10
integrator = "midpoint"
checks = ["gauss_bonnet", "energy_monotone", "energy_identity", "volume_invariance"]
"#;

fn l2flow(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_l2flow"));
    cmd.args(args).env_remove(l2flow_lab::OUTPUT_DIR_ENV);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_verify_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("out");
    let o = l2flow(&["run", &scenario, "--output", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["history.csv", "energy.csv", "report.json", "summary.txt", "trace.json", "scenario.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("snapshots/state_000.metric.bin").is_file());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("energy_identity") && summary.contains("PASS"));

    let before = fs::read(out.join("report.json")).unwrap();
    let o = l2flow(&["verify", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let after: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let first: serde_json::Value = serde_json::from_slice(&before).unwrap();
    let values = |v: &serde_json::Value| -> Vec<serde_json::Value> {
        v["checks"].as_array().unwrap().iter().map(|c| c["value"].clone()).collect()
    };
    assert_eq!(values(&first), values(&after));

    let o = l2flow(&["report", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("gauss_bonnet"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "small.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = l2flow(&["run", &scenario, "-o", d.to_str().unwrap()], &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["history.csv", "energy.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "small.toml", SMALL);
    let out = tmp.path().join("from-env");
    let o = l2flow(&["run", &scenario], &[(l2flow_lab::OUTPUT_DIR_ENV, &out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("history.csv").is_file());
}

#[test]
fn failing_check_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[tolerances]\nvolume_invariance = -1.0\n");
    let scenario = write(tmp.path(), "strict.toml", &text);
    let out = tmp.path().join("out");
    let o = l2flow(&["run", &scenario, "-o", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let failed: Vec<_> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(failed, ["volume_invariance"]);
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = l2flow(&["run", tmp.path().join("missing.toml").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let bad = write(tmp.path(), "bad.toml", &format!("{SMALL}\nunknown_key = 1\n"));
    let o = l2flow(&["run", &bad], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown_key"), "{}", stderr(&o));
    let o = l2flow(&["verify", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = l2flow(&["frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unstable_amplitude_aborts_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/unstable.toml");
    let o = l2flow(&["run", scenario.to_str().unwrap(), "-o", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("grid point"), "{}", stderr(&o));
}

#[test]
fn gradcheck_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "small.toml", SMALL);
    let o = l2flow(&["oracle", "gradcheck", &scenario], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}
