use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn llc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llc-dmm")).args(args).output().expect("binary runs")
}

fn text(out: &[u8]) -> String {
    String::from_utf8_lossy(out).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONFIG: &str = r#"
schema_version = 1
preset = "set2"

[scenario]
u = 400.0
duration = 0.004
decimation = 5

[[scenario.profile.segments]]
t_start = 0.0
t_end = 0.002
fs_start = 312.5e3
fs_end = 312.5e3
ramp = "hold"

[[scenario.profile.segments]]
t_start = 0.002
t_end = 0.004
fs_start = 312.5e3
fs_end = 500e3
ramp = "linear"

[[scenario.faults]]
t_on = 0.001
t_off = 0.0015
r_fault = 1e-3
"#;

#[test]
fn gain_writes_unity_rows() {
    let out = llc(&["gain", "--preset", "set1", "--q", "0.2,1", "--points", "11"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("F,Q,G"));
    let unity: Vec<_> = lines.filter(|l| l.starts_with("1,")).collect();
    assert_eq!(unity, ["1,0.2,1", "1,1,1"]);
}

#[test]
fn precomputed_bundle_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("set2.json");
    let csv = dir.path().join("out.csv");
    let out = llc(&["precompute", "--preset", "set2", "--fixed-point", "--out", path(&bundle)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let out = llc(&[
        "run", "--preset", "set2", "--engine", "dmm1-fxp", "--duration", "1e-4", "--decimation", "10", "--bundle",
        path(&bundle), "--out", path(&csv),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let body = fs::read_to_string(&csv).unwrap();
    assert!(body.starts_with("t,vo,ir,im,sigma,fs\n"));
    assert_eq!(body.lines().count(), 1 + 400);
}

#[test]
fn bundle_for_other_parameters_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("set1.json");
    assert!(llc(&["precompute", "--preset", "set1", "--out", path(&bundle)]).status.success());
    let out = llc(&["run", "--preset", "set2", "--engine", "dmm2", "--bundle", path(&bundle), "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("built for parameters"));
}

#[test]
fn verify_passes_on_both_presets() {
    for preset in ["set1", "set2"] {
        let out = llc(&["verify", "--preset", preset, "--steps", "20000"]);
        let stdout = text(&out.stdout);
        assert!(out.status.success(), "{stdout}");
        assert_eq!(stdout.matches("PASS").count(), 4, "{stdout}");
        assert!(stdout.contains("feasible rectifier states [0, 6, 9, 15]"));
    }
}

#[test]
fn sequence_reports_and_gates_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("seq.toml");
    let out = llc(&[
        "sequence", "--duration", "0.003", "--csv-dir", path(dir.path()), "--decimation", "30", "--save-config",
        path(&saved),
    ]);
    let stdout = text(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", text(&out.stderr));
    assert!(stdout.contains("Sequence"));
    assert!(stdout.contains("0.00s-0.003s"), "{stdout}");
    for f in ["reference.csv", "dut.csv"] {
        assert_eq!(fs::read_to_string(dir.path().join(f)).unwrap().lines().count(), 1 + 4000);
    }
    let strict = llc(&["sequence", "--config", path(&saved), "--threshold", "0"]);
    assert_eq!(strict.status.code(), Some(1), "{}", text(&strict.stdout));
    assert!(text(&strict.stdout).contains("FAIL"));
}

#[test]
fn scenario_file_with_fault_and_ramp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let csv = dir.path().join("w.csv");
    let out = llc(&["run", "--config", path(&cfg), "--engine", "dmm1", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let body = fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 1 + 160_000 / 5);
    let last = body.lines().last().unwrap();
    let fs_col: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(fs_col > 490e3 && fs_col <= 500e3, "{last}");

    let out = llc(&["sequence", "--config", path(&cfg), "--reference", "iter-be", "--dut", "dmm2"]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    let table = text(&out.stdout);
    for window in ["0.00s-0.001s", "0.001s-0.0015s", "0.0015s-0.002s", "0.002s-0.004s", "0.00s-0.004s"] {
        assert!(table.lines().any(|l| l.starts_with(window) && l.ends_with('%')), "{window} in {table}");
    }
}

#[test]
fn malformed_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("schema_version = 1", "schema_version = 7")).unwrap();
    let out = llc(&["run", "--config", path(&cfg), "--engine", "dmm2", "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("schema version 7"));
    let out = llc(&["run", "--engine", "rk4", "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
}
