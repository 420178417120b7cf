//! End-to-end tests of the mplab binary: exit codes, file formats, and
//! manifest-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn mplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mplab"))
        .args(args)
        .output()
        .expect("spawn mplab")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn manifest_field(dir: &Path, stem: &str, field: &str) -> serde_json::Value {
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.join(format!("{stem}.manifest.json")))).unwrap();
    v.get(field).cloned().unwrap_or(serde_json::Value::Null)
}

#[test]
fn generate_writes_published_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "generate",
        "--schedule",
        "constant:2",
        "--seeds",
        "minimal",
        "-T",
        "8",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir.path().join("tokens.txt")), "1\n2\n1\n3\n1\n2\n1\n4\n");
}

#[test]
fn generate_empty_stream_is_ok() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "generate",
        "--schedule",
        "linear:1",
        "-T",
        "0",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(&dir.path().join("tokens.txt")), "");
}

#[test]
fn generate_is_reproducible_by_manifest() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = mplab(&[
            "generate",
            "--schedule",
            "linear:1",
            "--seeds",
            "random",
            "--rng-seed",
            "42",
            "-T",
            "5000",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(d1.path().join("tokens.txt")).unwrap(),
        std::fs::read(d2.path().join("tokens.txt")).unwrap()
    );
    assert_eq!(
        manifest_field(d1.path(), "generate", "content_digest"),
        manifest_field(d2.path(), "generate", "content_digest")
    );
}

#[test]
fn generate_random_without_seed_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "generate",
        "--schedule",
        "linear:1",
        "--seeds",
        "random",
        "-T",
        "10",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_binary_is_little_endian_u32() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "generate",
        "--schedule",
        "constant:2",
        "-T",
        "8",
        "--format",
        "bin",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let bytes = std::fs::read(dir.path().join("tokens.bin")).unwrap();
    let toks: Vec<u32> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(toks, vec![1, 2, 1, 3, 1, 2, 1, 4]);
}

#[test]
fn generate_santa_fe_csv_has_consistent_facts() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "generate",
        "--schedule",
        "linear:1",
        "--knowledge",
        "iid:9",
        "-T",
        "500",
        "--format",
        "csv",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let body = read(&dir.path().join("tokens.csv"));
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("t,k,z"));
    let mut facts = std::collections::HashMap::new();
    for (i, line) in lines.enumerate() {
        let mut parts = line.split(',');
        let t: usize = parts.next().unwrap().parse().unwrap();
        let k: u64 = parts.next().unwrap().parse().unwrap();
        let z: u8 = parts.next().unwrap().parse().unwrap();
        assert_eq!(t, i + 1);
        if let Some(prev) = facts.insert(k, z) {
            assert_eq!(prev, z, "fact flip at k = {k}");
        }
    }
}

#[test]
fn verify_passes_on_constant_three() {
    let out = mplab(&[
        "verify",
        "--schedule",
        "constant:3",
        "--r-max",
        "6",
        "-T",
        "100000",
        "--rng-seed",
        "1",
        "--reps",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("waiting-times       PASS"));
}

#[test]
fn verify_trivial_capped_unit() {
    let out = mplab(&[
        "verify", "--schedule", "capped:1", "--r-max", "3", "-T", "1000", "--rng-seed", "1",
        "--reps", "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_writes_marginal_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "verify",
        "--schedule",
        "linear:1",
        "--r-max",
        "10",
        "-T",
        "200000",
        "--rng-seed",
        "4",
        "--reps",
        "20",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let body = read(&dir.path().join("marginal.csv"));
    assert!(body.starts_with("r,f_hat,f_closed,pmf_hat,pmf_closed\n"));
    assert_eq!(body.lines().count(), 11);
}

#[test]
fn verify_rejects_non_finite_schedule() {
    let out = mplab(&[
        "verify", "--schedule", "power:1:2", "--rng-seed", "1", "-T", "1000",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn entropy_reports_exact_identity() {
    let out = mplab(&["entropy", "--schedule", "capped:2,1", "-T", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identity_exact"], serde_json::Value::Bool(true));
    let h_x = v["h_x"].as_f64().unwrap();
    assert!((h_x - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(v["e_n_t"].as_f64().unwrap(), 2.0);
}

#[test]
fn entropy_bits_toggle_is_formatting_only() {
    let out = mplab(&["entropy", "--schedule", "capped:2,1", "-T", "4", "--bits"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["h_x"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert_eq!(v["unit"], "bits");
}

#[test]
fn entropy_budget_cap_exits_three() {
    let out = Command::new(env!("CARGO_BIN_EXE_mplab"))
        .args(["entropy", "--schedule", "capped:10,10,10,1", "-T", "4"])
        .env("MPLAB_BUDGET", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_schedule_literal_is_usage_error() {
    let out = mplab(&["generate", "--schedule", "warp:9", "-T", "5", "--out-dir", "/tmp"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mplab(&["verify", "--schedule", "capped:3,2", "--rng-seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_fit_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "scan",
        "--schedule",
        "linear:1",
        "--n-grid",
        "pow2:3..9",
        "--t-grid",
        "300,1000,3000,10000,30000",
        "--test-tokens",
        "20000",
        "--reps",
        "2",
        "--rng-seed",
        "77",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scan_csv = dir.path().join("scan.csv");
    let body = read(&scan_csv);
    assert!(body.starts_with("c,N,T,A_NT,r_analytic,r_empirical,stderr,error_rate,reps\n"));
    assert_eq!(body.lines().count(), 1 + 7 * 5);

    // fit picks the schedule up from the scan manifest.
    let out = mplab(&["fit", "--scan", scan_csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("fit.json"))).unwrap();
    let gamma_n = fit["gamma_N"].as_f64().unwrap();
    let gamma_t = fit["gamma_T"].as_f64().unwrap();
    assert!((gamma_n - 1.0).abs() < 0.25, "γ_N = {gamma_n}");
    assert!((gamma_t - 0.5).abs() < 0.15, "γ_T = {gamma_t}");
    assert!(fit["constraint_residual"].as_f64().unwrap() < 0.1);

    let out = mplab(&[
        "plot",
        "risk",
        "--scan",
        scan_csv.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let svg = read(&dir.path().join("risk_vs_n.svg"));
    assert!(svg.starts_with("<svg"));
    let digest = manifest_field(dir.path(), "plot_risk", "content_digest");
    assert!(svg.contains(digest.as_str().unwrap()));
    assert!(dir.path().join("risk_vs_t.svg").exists());
}

#[test]
fn scan_is_deterministic_across_runs() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = mplab(&[
            "scan",
            "--schedule",
            "linear:1",
            "--n-grid",
            "8,32,128",
            "--t-grid",
            "500,2000",
            "--test-tokens",
            "5000",
            "--reps",
            "2",
            "--rng-seed",
            "123",
            "--jobs",
            "2",
            "--out-dir",
            d.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(d1.path().join("scan.csv")).unwrap(),
        std::fs::read(d2.path().join("scan.csv")).unwrap()
    );
    assert_eq!(
        manifest_field(d1.path(), "scan", "content_digest"),
        manifest_field(d2.path(), "scan", "content_digest")
    );
}

#[test]
fn plot_type_growth_emits_figure_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&[
        "plot",
        "type-growth",
        "--schedules",
        "linear:0.5,linear:1,linear:2",
        "-T",
        "200000",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = read(&dir.path().join("type_growth.svg"));
    assert!(svg.starts_with("<svg"));
    // Three data series plus three fitted overlays.
    assert!(svg.matches("<polyline").count() >= 6);
    for label in ["linear_1d2", "linear_1", "linear_2"] {
        assert!(
            dir.path().join(format!("type_growth_{label}.csv")).exists(),
            "missing growth csv for {label}"
        );
        let fit = read(&dir.path().join(format!("fit_{label}.csv")));
        assert!(fit.starts_with("exponent,constant,r2,range\n"));
    }
    // Fitted exponents on this short run are already near c/(c+1).
    let fit1 = read(&dir.path().join("fit_linear_1.csv"));
    let exp: f64 = fit1.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((exp - 0.5).abs() < 0.1, "exponent {exp}");
}
