//! Command-line behaviour and exit codes.

use std::fs;
use std::process::Command;

fn bbmb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bbmb"))
}

const SMALL: &str = r#"{
    "name": "cli-small", "beta": 1.0, "gamma": 1.0, "alpha": 1.5, "mass": 0.3,
    "data_kind": "prescribed_r0", "amplitude": 0.0, "c_plus": 1.0, "c_minus": -1.0,
    "L": 64.0, "N": 512, "norms": ["linf", "l2"], "derivative_orders": [0]
}"#;

#[test]
fn verify_identities_passes() {
    let out = tempfile::tempdir().unwrap();
    let st = bbmb()
        .args(["verify", "--suite", "identities", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.path().join("verify-identities/report.json").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, SMALL.replace("\"name\"", "\"colour\": 1, \"name\"")).unwrap();
    let st = bbmb().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let late = dir.path().join("late.json");
    fs::write(&late, SMALL.replace("\"norms\"", "\"t_samples\": [1.0, 100.0], \"norms\"")).unwrap();
    let st = bbmb().args(["simulate", "--config"]).arg(&late).output().unwrap();
    assert_eq!(st.status.code(), Some(2));

    let st = bbmb().args(["verify", "--suite", "everything"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn simulate_then_fit_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let st = bbmb()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let code = st.status.code().unwrap();
    assert!(code == 0 || code == 1, "{}", String::from_utf8_lossy(&st.stderr));
    let bundle = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let st = bbmb()
        .args(["rates", "--bundle"])
        .arg(&bundle)
        .args(["--combo", "chi+Z", "--norm", "linf", "--l", "0"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert!(fit["exponent"].as_f64().unwrap() < 0.0);

    let st = bbmb()
        .args(["rates", "--bundle"])
        .arg(&bundle)
        .args(["--combo", "chi+V", "--norm", "linf"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn profile_table_and_kernel_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("profiles.csv");
    let st = bbmb()
        .args([
            "profiles", "--beta", "1", "--gamma", "1", "--mass", "0.5", "--alpha", "1.5",
            "--c-plus", "1", "--c-minus", "-1", "--z-time", "2", "--table-out",
        ])
        .arg(&table)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let constants: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(constants["kappa"].as_f64(), Some(0.125));
    let text = fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("x,chi_star,eta_star,V_star,Z\n"));
    assert_eq!(text.lines().count(), 402);

    let st = bbmb()
        .args(["kernel-table", "--gamma", "1", "--t", "1", "--L", "16", "--N", "32"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let text = String::from_utf8(st.stdout).unwrap();
    assert!(text.starts_with("xi,re_m,im_m\n"));
    assert_eq!(text.lines().count(), 33);
}
