//! External-interface tests: the CLI binary, the profile file format, the
//! CSV column contract, and output determinism through the real executable.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lidar-scatter")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("lidar_scatter_iface").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

const BASE_CONFIG: &str = r#"
mode = "single"
seed = 11

[medium]
kind = "homogeneous"
sigma_t = 0.1
phase = { kind = "isotropic", scattering = 0.05 }

[geometry]
rho0 = 0.1
epsilon = 0.1

[time]
t_min = 20.0
t_max = 100.0
n = 5
"#;

#[test]
fn single_mode_csv_contract() {
    let dir = workdir("single");
    let cfg = dir.join("run.toml");
    write(&cfg, BASE_CONFIG);
    let out = dir.join("signal.csv");
    let status = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "# lidar-scatter csv v1");
    assert_eq!(lines.next().unwrap(), "# mode: single");
    assert_eq!(
        lines.next().unwrap(),
        "t,i1,far_field_ok,far_field_margin,smallness_q,q_ok"
    );
    let data: Vec<&str> = lines.collect();
    assert_eq!(data.len(), 5);
    let first: Vec<&str> = data[0].split(',').collect();
    assert_eq!(first[0], "20");
    let i1: f64 = first[1].parse().unwrap();
    let hand = 2.0 * std::f64::consts::PI * 0.01 / 400.0 * (-2.0f64).exp() * 0.05
        / (4.0 * std::f64::consts::PI);
    assert!((i1 - hand).abs() <= 1e-15);
    assert_eq!(first[2], "true");

    // summary sibling exists and carries the metadata keys
    let summary = std::fs::read_to_string(dir.join("signal.csv.summary.txt")).unwrap();
    assert!(summary.contains("config_hash: sha256:"));
    assert!(summary.contains("seed: 11"));
    assert!(summary.contains("csv_schema: v1"));
    assert!(!summary.contains("regime_violation: true"));
}

#[test]
fn double_mode_flags_empty_d0() {
    let dir = workdir("double");
    let cfg = dir.join("run.toml");
    // first grid point below 2 rho0 / eps = 2 -> empty D0, zero I21
    write(
        &cfg,
        &BASE_CONFIG
            .replace("mode = \"single\"", "mode = \"double\"")
            .replace("t_min = 20.0", "t_min = 1.5")
            .replace("t_max = 100.0", "t_max = 61.5"),
    );
    let out = dir.join("signal.csv");
    let status = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let header = csv.lines().nth(2).unwrap();
    assert_eq!(
        header,
        "t,i21,i21_err,i22_bound,i23_bound,d0_empty,far_field_ok,far_field_margin,smallness_q,q_ok"
    );
    let row: Vec<&str> = csv.lines().nth(3).unwrap().split(',').collect();
    assert_eq!(row[0], "1.5");
    assert_eq!(row[1], "0"); // I21 = 0
    assert_eq!(row[5], "true"); // d0_empty flag
    assert_eq!(row[4], ""); // i23 bound undefined below eps t = 2 rho0
    let later: Vec<&str> = csv.lines().nth(4).unwrap().split(',').collect();
    assert_eq!(later[5], "false");
    let i21: f64 = later[1].parse().unwrap();
    assert!(i21 > 0.0);
}

#[test]
fn strict_mode_flags_regime_violations() {
    let dir = workdir("strict");
    let cfg = dir.join("run.toml");
    // t = 1 is inside 2 rho0/eps = 2: far-field check fails there
    write(
        &cfg,
        &BASE_CONFIG
            .replace("t_min = 20.0", "t_min = 1.0")
            .replace("n = 5", "n = 3"),
    );
    let strict = Command::new(bin())
        .args(["--config", cfg.to_str().unwrap(), "--strict"])
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(2), "strict run must exit 2");
    // without --strict the same run succeeds (diagnostics in rows, not fatal)
    let loose = Command::new(bin())
        .args(["--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(loose.status.success());
    let summary = String::from_utf8(loose.stdout).unwrap();
    assert!(summary.contains("regime_violation: true"));
}

#[test]
fn profile_file_roundtrip() {
    let dir = workdir("profile");
    write(
        &dir.join("profile.toml"),
        r#"
            kind = "tabulated"
            z = [0.0, 10.0]
            sigma_t = [0.2, 0.0]

            [phase]
            kind = "table"
            mu = [-1.0, 0.0, 1.0]
            z = [0.0, 10.0]
            values = [[0.01, 0.0], [0.005, 0.0], [0.002, 0.0]]
        "#,
    );
    let cfg = dir.join("run.toml");
    write(
        &cfg,
        r#"
            mode = "single"
            [medium]
            file = "profile.toml"
            [geometry]
            rho0 = 0.1
            epsilon = 0.1
            [time]
            points = [10.0]
        "#,
    );
    let out = dir.join("signal.csv");
    let status = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let row: Vec<&str> = csv.lines().nth(3).unwrap().split(',').collect();
    // sigma(-1, 5) = 0.005 by the table (mu = -1 row interpolated in z), and
    // the optical depth to z = 5 is 0.75, so I1 is fully determined here.
    let expected = 2.0 * std::f64::consts::PI * 0.01 / 100.0 * (-1.5f64).exp() * 0.005;
    let i1: f64 = row[1].parse().unwrap();
    assert!(
        (i1 - expected).abs() <= 1e-15 * expected.abs().max(1.0),
        "i1 {i1} vs {expected}"
    );
}

#[test]
fn config_errors_carry_distinct_classes() {
    let dir = workdir("errors");
    // missing config file
    let missing = Command::new(bin())
        .args(["--config", dir.join("nope.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("file not found"));

    // unparsable file
    let bad = dir.join("bad.toml");
    write(&bad, "mode = [not toml");
    let schema = Command::new(bin())
        .args(["--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(schema.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&schema.stderr).contains("schema violation"));

    // invariant violations, all reported together with field paths
    let invalid = dir.join("invalid.toml");
    write(
        &invalid,
        &BASE_CONFIG
            .replace("rho0 = 0.1", "rho0 = -2.0")
            .replace("epsilon = 0.1", "theta0 = 2.0"),
    );
    let inv = Command::new(bin())
        .args(["--config", invalid.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(inv.status.code(), Some(1));
    let err = String::from_utf8_lossy(&inv.stderr).to_string();
    assert!(err.contains("geometry.rho0"), "stderr: {err}");
    assert!(err.contains("geometry.theta0"), "stderr: {err}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workdir("determinism");
    let cfg = dir.join("run.toml");
    write(
        &cfg,
        r#"
            mode = "validate"
            seed = 5150
            [medium]
            kind = "homogeneous"
            sigma_t = 0.02
            phase = { kind = "isotropic", scattering = 0.015 }
            [geometry]
            rho0 = 0.1
            epsilon = 0.1
            [time]
            t_min = 30.0
            t_max = 70.0
            n = 5
            [mc]
            histories = 100000
            blocks = 8
            estimator = "next-event"
        "#,
    );
    let run_once = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let out = dir.join(format!("{tag}.csv"));
        let status = Command::new(bin())
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let summary = std::fs::read(dir.join(format!("{tag}.csv.summary.txt"))).unwrap();
        (std::fs::read(&out).unwrap(), summary)
    };
    let (csv_a, sum_a) = run_once("a");
    let (csv_b, sum_b) = run_once("b");
    assert_eq!(csv_a, csv_b, "csv bytes must be identical across reruns");
    assert_eq!(
        sum_a, sum_b,
        "summary bytes must be identical across reruns"
    );
}

#[test]
fn trajectory_log_is_structured_jsonl() {
    let dir = workdir("trajlog");
    let cfg = dir.join("run.toml");
    write(
        &cfg,
        r#"
            mode = "mc"
            seed = 3
            [medium]
            kind = "homogeneous"
            sigma_t = 0.05
            phase = { kind = "isotropic", scattering = 0.05 }
            [geometry]
            rho0 = 1.0
            epsilon = 0.4
            [time]
            t_min = 5.0
            t_max = 45.0
            n = 5
            [mc]
            histories = 200
            blocks = 2
            estimator = "analog"
        "#,
    );
    let log = dir.join("trace.jsonl");
    let out = dir.join("mc.csv");
    let status = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--log-trajectories",
            log.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&log).unwrap();
    let mut emits = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["history", "event", "position", "direction", "time", "order"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
        if v["event"] == "emit" {
            emits += 1;
        }
    }
    assert_eq!(emits, 200, "one emit event per history");

    // mc-mode CSV contract
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().nth(2).unwrap(),
        "t_lo,t_hi,t_center,class,rate,stderr,events"
    );
    let classes: Vec<&str> = csv
        .lines()
        .skip(3)
        .take(5)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(
        classes,
        [
            "order1",
            "order2_d0",
            "order2_remainder",
            "order3_plus",
            "total"
        ]
    );
}
