//! End-to-end checks of the `jumpform` binary: exit codes, CSV schemas,
//! and chain-file ingestion.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jumpform"));
    cmd.env("JUMPFORM_THREADS", "2");
    cmd
}

fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
    let path = std::env::temp_dir().join(format!("jumpform-cli-{}-{name}", std::process::id()));
    let mut file = std::fs::File::create(&path).unwrap();
    file.write_all(contents.as_bytes()).unwrap();
    path
}

const TWO_STATE: &str = r#"{"n": 2, "m": [1.0, 1.0], "R": [[0.0, 1.5], [1.5, 0.0]]}"#;

#[test]
fn inspect_valid_chain_succeeds() {
    let path = write_temp("valid.json", TWO_STATE);
    let out = bin().arg("inspect").arg(&path).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("states: 2"));
    assert!(text.contains("conservative: true"));
    // λ_1 = 2·1.5 for the symmetric two-state chain.
    assert!(text.contains("3.0000000000"));
}

#[test]
fn inspect_detailed_balance_violation_exits_2() {
    let bad = r#"{"n": 2, "m": [1.0, 2.0], "R": [[0.0, 1.0], [1.0, 0.0]]}"#;
    let path = write_temp("bad.json", bad);
    let out = bin().arg("inspect").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detailed balance"));
}

#[test]
fn inspect_malformed_json_exits_2() {
    let path = write_temp("garbage.json", "{not json");
    let out = bin().arg("inspect").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn squarefns_random_field_emits_csv() {
    let path = write_temp("sq.json", TWO_STATE);
    let out = bin()
        .args(["squarefns", path.to_str().unwrap(), "--f", "random:7", "--p", "2,3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("state_index,G,G_tilde,H,H_tilde"));
    assert!(text.contains("p,norm_G,norm_G_tilde,norm_H,norm_H_tilde,method,tol"));
}

#[test]
fn squarefns_field_file_roundtrip() {
    let chain = write_temp("sqf.json", TWO_STATE);
    let field = write_temp("field.txt", "1.0\n-1.0\n");
    let out = bin()
        .args(["squarefns", chain.to_str().unwrap(), "--f", field.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn brown_scan_emits_csv_header() {
    let out = bin().args(["brown", "--p", "4", "--n", "8,16"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,p,ratio_G_tilde,normalized,target_constant,ratio_H"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn hardy_stein_preset_chain_passes() {
    let path = write_temp("hs.json", r#"{"preset": "brown_chain", "n": 4}"#);
    let out = bin()
        .args(["hardy-stein", path.to_str().unwrap(), "--p", "2", "--seeds", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("seed,p,lhs,rhs,rel_err"));
}

#[test]
fn mc_small_run_reports_brackets() {
    let path = write_temp("mc.json", TWO_STATE);
    let out = bin()
        .args(["mc", path.to_str().unwrap(), "--T", "1.0", "--paths", "20000", "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("seed,n,T,paths,est_M2,se_M2,est_sharp,se_sharp,est_square,se_square"));
}
