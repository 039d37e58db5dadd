use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn teleportsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleportsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Header plus records, CRLF-terminated.
fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.split("\r\n").filter(|l| !l.is_empty());
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn channel_mode_reports_target_fidelity() {
    let out = teleportsim(&["channel"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    let f: f64 = rows[0][column(&header, "fidelity")].parse().unwrap();
    assert!(f >= 1.0 - 1e-10);
    assert_eq!(rows[0][column(&header, "lambda_t")], "0.785398163397");
    assert_eq!(rows[0][column(&header, "drive_multiple")], "250");
    assert!(stderr(&out).contains("PASS channel fidelity"));
}

#[test]
fn table1_mode_has_four_rows() {
    let out = teleportsim(&["table1", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    let outcomes: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(outcomes, ["ee", "gg", "eg", "ge"]);
    let corrections: Vec<&str> = rows.iter().map(|r| r[column(&header, "correction")].as_str()).collect();
    assert_eq!(corrections, ["I", "sigma_z", "sigma_y", "sigma_x"]);
    let mut counts = 0;
    for r in &rows {
        let p: f64 = r[column(&header, "probability")].parse().unwrap();
        let f: f64 = r[column(&header, "min_fidelity")].parse().unwrap();
        assert!((p - 0.25).abs() < 1e-9 && (f - 1.0).abs() < 1e-9);
        counts += r[column(&header, "count")].parse::<usize>().unwrap();
    }
    assert_eq!(counts, 100);
    assert!(stderr(&out).contains("total success probability: 1"));
}

#[test]
fn timing_sweep_peaks_at_quarter_turn() {
    let out = teleportsim(&["timing-sweep", "--samples", "41"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 41);
    let (x, f) = (column(&header, "lambda_t_over_pi"), column(&header, "average_fidelity"));
    let best = rows.iter().max_by(|a, b| a[f].parse::<f64>().unwrap().total_cmp(&b[f].parse().unwrap())).unwrap();
    assert_eq!(best[x], "0.25");
    assert_eq!(rows.first().unwrap()[x], "0.125");
    assert_eq!(rows.last().unwrap()[x], "0.375");
}

#[test]
fn full_vs_eff_passes_default_regime() {
    let out = teleportsim(&["full-vs-eff", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let f: Vec<f64> = rows.iter().map(|r| r["end_to_end_fidelity"].as_f64().unwrap()).collect();
    assert!(f[0] >= 0.95 && f[0] < f[1] && f[1] < f[2], "{f:?}");
    assert_eq!(rows[2]["detuning_ratio"], 20);
    assert_eq!(rows[2]["drive_ratio"], 20);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    for (name, seed) in [("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8"), ("a.json", "7"), ("b.json", "7")] {
        let out = teleportsim(&["teleport", "--samples", "25", "--seed", seed, "--out", &path(name)]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(out.stdout.is_empty());
    }
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
    assert_eq!(read("a.json"), read("b.json"));

    // extension picks the format
    let rows: Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 25);
    assert!(rows[0].as_object().unwrap().values().all(|v| !v.is_object() && !v.is_array()));
}

#[test]
fn json_and_csv_carry_the_same_records() {
    let csv = teleportsim(&["teleport", "--samples", "5"]);
    let json = teleportsim(&["teleport", "--samples", "5", "--format", "json"]);
    let (header, rows) = csv_rows(&stdout(&csv));
    let v: Value = serde_json::from_str(&stdout(&json)).unwrap();
    for (r, obj) in rows.iter().zip(v.as_array().unwrap()) {
        let keys: Vec<&String> = obj.as_object().unwrap().keys().collect();
        assert_eq!(keys, header.iter().collect::<Vec<_>>());
        assert_eq!(obj["outcome"].as_str().unwrap(), r[column(&header, "outcome")]);
        assert_eq!(obj["alpha_re"].to_string(), r[column(&header, "alpha_re")]);
    }
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"mode": "channel", "delta": 10, "g": 1}"#);
    let out = teleportsim(&["--config", &cfg, "--delta", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows[0][column(&header, "delta")], "20");

    let empty = write(dir.path(), "empty.json", "");
    let out = teleportsim(&["channel", "--config", &empty]);
    let (header, rows) = csv_rows(&stdout(&out));
    let defaults = [("g", "1"), ("delta", "10"), ("omega", "50")];
    for (k, v) in defaults {
        assert_eq!(rows[0][column(&header, k)], v);
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "bad.json", r#"{"kapa": 0.1}"#);
    let out = teleportsim(&["channel", "--config", &bad_key]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`kapa`"), "{}", stderr(&out));

    let bad_type = write(dir.path(), "type.json", r#"{"nmax": "ten"}"#);
    let out = teleportsim(&["channel", "--config", &bad_type]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`nmax`"));

    let out = teleportsim(&["channel", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = teleportsim(&["channel", "--g", "abc"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_lists_every_violation() {
    let out = teleportsim(&["teleport", "--g=-1", "--nmax", "0", "--samples", "0", "--kappa=-2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for word in ["g must", "nmax must", "samples must", "kappa must"] {
        assert!(err.contains(word), "{err}");
    }
    let out = teleportsim(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mode is required"));
}

#[test]
fn unwritable_output_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("no/such/dir/out.csv");
    let out = teleportsim(&["channel", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

/// The photon-number gate is red at the default regime (spread ≈ 0.049);
/// the sweep must say so through its exit status.
#[test]
fn decoherence_sweep_reports_failed_check() {
    let out = teleportsim(&["decoherence-sweep", "--kappa", "0"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("FAIL photon-number independence"), "{err}");
    assert!(err.contains("PASS decay insensitivity"), "{err}");
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 5);
    let methods: Vec<&str> = rows.iter().map(|r| r[column(&header, "method")].as_str()).collect();
    assert_eq!(methods, ["unitary", "unitary", "unitary", "unitary", "master"]);
    let f = column(&header, "average_fidelity");
    let closed: f64 = rows[3][f].parse().unwrap();
    let master: f64 = rows[4][f].parse().unwrap();
    // κ = 0 under the master equation reproduces the unitary leg
    assert!((closed - master).abs() < 1e-6, "{closed} vs {master}");
}
