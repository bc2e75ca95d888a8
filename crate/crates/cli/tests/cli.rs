use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"

[option]
kind = "call"
strike = 100.0
maturity = 0.5

[model]
v0 = 0.04
rd0 = 0.1
rf0 = 0.1
kappa = 0.5
vbar = 0.1
gamma = 0.3
lambda_d = 0.01
lambda_f = 0.05
eta_d = 0.007
eta_f = 0.012
theta_d = { p1 = 0.05, p2 = 0.0, p3 = 0.0 }
theta_f = { p1 = 0.05, p2 = 0.0, p3 = 0.0 }
correlation = { sv = -0.4, sd = -0.15, sf = -0.15, vd = 0.3, vf = 0.3, df = 0.25 }

[grid]
m = [10, 6, 5, 5]

[solver]
krylov_dim = 30
"#;

fn fxhhw(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fxhhw"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("FXHHW_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_reports_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = fxhhw(&["run", &cfg, "--out", s(&a)], Some("1"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("small"));
    let out = fxhhw(&["run", &cfg, "--out", s(&b)], Some("2"));
    assert!(out.status.success());
    for f in ["report.csv", "field.csv", "greeks.csv", "config.toml", "meta.toml"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f} differs between runs");
    }
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(report.contains("\r\n"));
}

#[test]
fn export_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let res = tmp.path().join("res");
    assert!(fxhhw(&["run", &cfg, "--out", s(&res)], None).status.success());
    let sv = tmp.path().join("sv.csv");
    let out = fxhhw(&["export", s(&res), "--slice", "sv", "--out", s(&sv)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // header plus one row per (s, v) node
    assert_eq!(fs::read_to_string(&sv).unwrap().lines().count(), 1 + 10 * 6);
    let out = fxhhw(&["export", s(&res), "--slice", "rdrf", "--at", "100,0.04,0.1,0.1"], None);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1 + 5 * 5);
    let out = fxhhw(&["export", s(&res), "--slice", "sx"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = fxhhw(&["export", s(&res), "--at", "1,2"], None);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn sweep_reports_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let dir = tmp.path().join("sw");
    let out = fxhhw(&["sweep", &cfg, "--axis", "s", "--ladder", "8,16,32", "--out", s(&dir)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let roc = fs::read_to_string(dir.join("roc.csv")).unwrap();
    assert_eq!(roc.lines().count(), 5, "{roc}");
    assert!(roc.lines().last().unwrap().contains("mean"));
    let out = fxhhw(&["sweep", &cfg, "--ladder", "8,16"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_input_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &SMALL.replace("kappa = 0.5", "kappa = -0.5"));
    let out = fxhhw(&["run", &cfg, "--out", s(&tmp.path().join("x"))], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    let cfg = config(tmp.path(), SMALL);
    let out = fxhhw(&["run", &cfg, "--out", s(&tmp.path().join("y"))], Some("zero"));
    assert_ne!(out.status.code(), Some(0));
}
