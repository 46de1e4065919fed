use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn etalab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_etalab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = etalab().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_names_the_invariant() {
    let dir = scratch("invalid");
    let cfg = dir.join("bad.ini");
    fs::write(&cfg, "[family]\nr = 0.9\n").unwrap();
    let out = etalab().args(["eta-table", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("family.r"), "{err}");
    assert!(!dir.join("eta-table").exists());
}

#[test]
fn passing_command_writes_report_and_exits_zero() {
    let dir = scratch("small-t");
    let cfg = dir.join("small.ini");
    fs::write(&cfg, "# coarse grid\n[grid]\nm = 2\nn = 16\n").unwrap();
    let out = etalab().args(["small-t-limit", "--jobs", "2", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    let report = fs::read_to_string(dir.join("small-t-limit").join("small-t-limit.csv")).unwrap();
    assert!(report.starts_with("check,omega,t,value_re"));
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn failing_check_exits_one() {
    let dir = scratch("strict");
    let cfg = dir.join("strict.ini");
    fs::write(&cfg, "[grid]\nm = 2\nn = 16\n[tolerances]\nsmall_t = 1e-300\n[times]\nsmall_t = 0.5\n").unwrap();
    let out = etalab().args(["small-t-limit", "--config"]).arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("FAIL"));
}

#[test]
fn eta_table_artifacts_are_deterministic() {
    let dir = scratch("eta");
    let cfg = dir.join("eta.ini");
    fs::write(&cfg, "[grid]\nm = 1\nn = 128\n[family]\nkind = winding\n").unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = etalab().args(["eta-table", "--config"]).arg(&cfg).arg("--out").arg(dir.join(run)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        files.push(fs::read(dir.join(run).join("eta-table").join("eta_table.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    assert!(text.lines().next().unwrap().ends_with("tail_bound"));
    assert_eq!(text.lines().count(), 129);
}
