use std::path::Path;
use std::process::{Command, Output};

fn fmq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmq")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn validate_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = fmq(&["validate", "--out", &out_arg(d.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("PASS interference-law"));
    assert!(!s.contains("FAIL"));
}

#[test]
fn bad_reflectance_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "command": "run-qkd", "attack": {"kind": "steal", "reflectance": 1.3}}"#).unwrap();
    let o = fmq(&["run-qkd", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reflectance out of range"));
}

#[test]
fn unknown_key_names_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, "{\"schema_version\": 1,\n\"command\": \"run-qkd\",\n\"sesion\": {}}").unwrap();
    let o = fmq(&["run-qkd", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = String::from_utf8_lossy(&o.stderr);
    assert!(e.contains("sesion") && e.contains("line 3"), "{e}");
}

#[test]
fn sampled_mode_requires_seed() {
    let o = fmq(&["run-qkd", "--mode", "sampled"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_is_io_error() {
    let o = fmq(&["run-qkd", "--config", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sweep_writes_csv_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let dir = d.path().join(sub);
        let o = fmq(&[
            "attack-sweep", "--attack", "steal", "--t-grid", "0:1:0.25", "--trials", "2000",
            "--mode", "sampled", "--seed", "5", "--out", &out_arg(&dir),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.join("sweep.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("T,V_mc,V_sem,V_closed_form,qber,qber_se"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn design_setup_flags() {
    let d = tempfile::tempdir().unwrap();
    let o = fmq(&[
        "design-setup", "--pixel", "10e-6", "--aperture", "10e-3", "--lambda", "1.56e-6", "--span", "3.68e-3",
        "--out", &out_arg(d.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("channels.csv")).unwrap();
    assert_eq!(csv.lines().count(), 24);
}

#[test]
fn teleport_and_crosstalk_run() {
    let d = tempfile::tempdir().unwrap();
    let o = fmq(&["run-teleport", "--g-grid", "0,1", "--seed", "2", "--out", &out_arg(&d.path().join("t"))]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(d.path().join("t/teleport.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = fmq(&["crosstalk-test", "--leak", "0,0.05:0.01", "--seed", "2", "--out", &out_arg(&d.path().join("x"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("x/crosstalk_summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn mismatched_config_command_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "command": "validate"}"#).unwrap();
    let o = fmq(&["run-qkd", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
