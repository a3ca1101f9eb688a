use std::path::Path;
use std::process::{Command, Output};

fn vscsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vscsim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VSCSIM_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn run_then_compare_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let o = vscsim(
        &["run", "--system", "small", "--test", "setpoint", "--model", "pm-i0", "--dt", "250e-6", "--out-dir", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("VSC1.P_ac=50.0000"), "{}", stdout(&o));
    let out = dir.path().join("o");
    for f in ["small_setpoint_pm-i0_2.5e-4.csv", "small_setpoint_pm-i0_2.5e-4.meta", "small_setpoint_pm-i0_2.5e-4_VSC1_PQ.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let o = vscsim(
        &["compare", "o/small_setpoint_pm-i0_2.5e-4", "o/small_setpoint_pm-i0_2.5e-4.csv", "--signal", "VSC1.P_ac", "--out-dir", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("RMSE VSC1.P_ac = 0.000000e0"), "{}", stdout(&o));
    assert!(out.join("compare_small_setpoint_pm-i0_2.5e-4_small_setpoint_pm-i0_2.5e-4_VSC1_P_ac.svg").is_file());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vscsim"))
        .args(["run", "--system", "small", "--test", "setpoint", "--model", "pm-i0", "--dt", "1e-3", "--no-plots", "--id", "env"])
        .current_dir(dir.path())
        .env("VSCSIM_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from_env/env.csv").is_file());
    assert!(!dir.path().join("from_env/env_VSC1_PQ.svg").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("tests/small_setpoint.toml");
    let o = vscsim(
        &["run", "--config", cfg.to_str().unwrap(), "--model", "pm-full", "--dt", "1e-3", "--id", "c", "--no-plots", "--out-dir", "."],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = std::fs::read_to_string(dir.path().join("c.meta")).unwrap();
    assert!(meta.contains("pm-full"), "{meta}");
}

#[test]
fn sweep_writes_table_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = vscsim(
        &[
            "sweep", "--system", "small", "--test", "setpoint", "--models", "pm-full", "--dts", "1e-4,1e-3", "--duration", "2.2",
            "--out-dir", "s",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = dir.path().join("s");
    let table = std::fs::read_to_string(s.join("sweep_small_setpoint.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(table.as_bytes());
    assert_eq!(rows.records().count(), 2 * 3);
    assert!(s.join("sweep_small_setpoint_VSC1_P_ac.svg").is_file());
    assert!(s.join("sweep_small_setpoint_timing.csv").is_file());
}

#[test]
fn validate_shipped_configs() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = vec![configs().join("small.toml"), configs().join("large.toml")];
    for e in std::fs::read_dir(configs().join("tests")).unwrap() {
        paths.push(e.unwrap().path());
    }
    let mut args = vec!["validate".to_string()];
    args.extend(paths.iter().map(|p| p.display().to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = vscsim(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("ok (system)")).count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // bad arguments and bad configuration
    assert_eq!(vscsim(&["run", "--system", "nope"], dir.path()).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "system = \"small\"\ntest = \"setpoint\"\nmodel = \"pm-i0\"\ndt = -1.0\n").unwrap();
    assert_eq!(vscsim(&["validate", bad.to_str().unwrap()], dir.path()).status.code(), Some(2));
    // unknown signal
    let o = vscsim(
        &["run", "--system", "small", "--test", "setpoint", "--model", "pm-i0", "--dt", "1e-3", "--id", "r", "--no-plots", "--out-dir", "."],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(vscsim(&["compare", "r", "r", "--signal", "VSC9.P_ac", "--no-plots"], dir.path()).status.code(), Some(2));
    // missing file
    let o = vscsim(&["compare", "missing", "r", "--signal", "VSC1.P_ac"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
    assert!(vscsim(&["list"], dir.path()).status.success());
}
