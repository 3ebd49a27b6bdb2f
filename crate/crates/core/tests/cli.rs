//! End-to-end runs of the command-line tool.

use std::process::{Command, Output};

fn ehcoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehcoop")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &tempfile::TempDir, text: &str) -> String {
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn example_reports_the_reference_accounting() {
    let out = ehcoop(&["example"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("3.0073"), "{text}");
    assert!(text.contains("14.0000"), "{text}");
    assert!(text.contains("audit passes: true"), "{text}");
}

#[test]
fn zero_harvest_never_cooperates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "n_slots = 3\ntheta_p = 0.0\ntheta_s = 0.0\n");
    let out = ehcoop(&["coopprob", "--config", &cfg, "--rs-from", "0.5", "--rs-to", "1", "--steps", "2", "--realizations", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rs_bar,p_joint,p_info,realizations"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(&cells[1..], ["0", "0", "4"], "{line}");
    }
}

#[test]
fn oracle_rejects_long_horizons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "n_slots = 4\n");
    let out = ehcoop(&["oracle", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at most 3"));
}

#[test]
fn zero_harvest_solve_is_trivially_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "n_slots = 2\nrs_bar = 0.0\ntheta_p = 0.0\ntheta_s = 0.0\n");
    let out = ehcoop(&["solve", "--config", &cfg, "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("status Converged"));
}

#[test]
fn out_directory_gets_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run");
    let out = ehcoop(&[
        "--workers", "2", "bsweep", "--bmax-from", "0", "--bmax-to", "4", "--steps", "3", "--realizations", "6", "--seed", "9",
        "--out", target.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(target.join("bsweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let manifest: toml::Table = std::fs::read_to_string(target.join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["command"].as_str(), Some("bsweep"));
    assert_eq!(manifest["master_seed"].as_integer(), Some(9));
    assert!(manifest.contains_key("config"));
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "alpha = 3.0\n");
    let out = ehcoop(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}
