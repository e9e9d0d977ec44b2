use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chlimit"));
    c.env_remove("CHLIMIT_THREADS");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("spawn chlimit")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn zero_data_stays_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("run").arg(scenario("zero_data.cfg")).arg("--out").arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let l2 = column(&csv, "l2_y");
    assert_eq!(l2.len(), 65);
    assert!(l2.iter().all(|v| *v == 0.0));
    assert!(dir.path().join("y_0064.csv").exists());
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("result: PASS"));
}

#[test]
fn incompatible_perturbation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .arg("depcheck")
        .arg(scenario("depcheck_incompatible.cfg"))
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("FAIL compatibility"), "{report}");
    assert!(report.contains("result: FAIL"));
}

#[test]
fn sweep_writes_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("sweep").arg(scenario("doublewell_sweep.cfg")).arg("--out").arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(column(&sweep, "delta"), vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3]);
    let fit = std::fs::read_to_string(dir.path().join("ratefit.txt")).unwrap();
    let p = column(&fit, "p")[0];
    assert!(p >= 0.25, "{fit}");
}

#[test]
fn kind_mismatch_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().arg("sweep").arg(scenario("zero_data.cfg")).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run kind 'single'"));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[problem]\ngraph = power 3\nbogus = 1\n[run]\nkind = single\n").unwrap();
    let out = run(bin().arg("run").arg(&cfg));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("problem.bogus"), "{err}");
}

#[test]
fn out_flag_overrides_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("single.cfg");
    let text = std::fs::read_to_string(scenario("zero_data.cfg")).unwrap();
    let cfg_out = dir.path().join("from_config");
    std::fs::write(&cfg, format!("{text}\n[output]\ndir = {}\n", cfg_out.display())).unwrap();
    let flag_out = dir.path().join("from_flag");
    let out = run(bin().arg("run").arg(&cfg).arg("--out").arg(&flag_out));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(flag_out.join("trajectory.csv").exists());
    assert!(!cfg_out.exists());
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = scenario("doublewell_sweep.cfg");
    let out = run(bin().arg("sweep").arg(&cfg).arg("--out").arg(a.path()));
    assert!(out.status.success());
    let out = run(bin().env("CHLIMIT_THREADS", "1").arg("sweep").arg(&cfg).arg("--out").arg(b.path()));
    assert!(out.status.success());
    for f in ["sweep.csv", "ratefit.txt", "report.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = run(bin().env("CHLIMIT_THREADS", "zero").arg("run").arg(scenario("zero_data.cfg")));
    assert_eq!(out.status.code(), Some(2));
}
