use std::path::Path;
use std::process::{Command, Output};

use ribaucour::export::parse_obj;
use serde_json::Value;

const TORUS: &str = r#"{"kind": "clifford_torus", "r": 0.7071067811865476}"#;

fn scene(dir: &Path, body: &str) -> String {
    let p = dir.join("scene.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn torus_scene(dir: &Path, extra: &str) -> String {
    scene(dir, &format!(r#"{{"chart": {TORUS}, {extra}}}"#))
}

fn ribaucour(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ribaucour")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_classifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [("0.3*sin(u)", 0), ("sin(u)*sin(v)", 1), ("1", 1)];
    for (tau, code) in cases {
        let s = torus_scene(tmp.path(), &format!(r#""tau": "{tau}", "grid": [32, 32]"#));
        let o = ribaucour(&["check", "--scene", &s, "--json"]);
        assert_eq!(o.status.code(), Some(code), "{tau}: {}", stdout(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        let report = &v["report"];
        match tau {
            "0.3*sin(u)" => assert_eq!(report["ribaucour"], true),
            "sin(u)*sin(v)" => {
                assert_eq!(report["ribaucour"], false);
                assert!(report["max_dalpha"].as_f64().unwrap() > 1e-2);
                assert!(report["max_dalpha_at"].is_array());
            }
            _ => {
                assert_eq!(report["regular"], false);
                assert!(report["not_regular_at"].is_array());
            }
        }
    }
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_tau = torus_scene(tmp.path(), r#""tau": "sin(u""#);
    assert_eq!(ribaucour(&["check", "--scene", &bad_tau]).status.code(), Some(2));
    let s = torus_scene(tmp.path(), r#""tau": "0""#);
    assert_eq!(ribaucour(&["check", "--scene", &s, "--grid", "3x3"]).status.code(), Some(2));
    assert_eq!(ribaucour(&["demoulin", "--scene", &s]).status.code(), Some(2));
    assert_eq!(ribaucour(&["check", "--scene", "/nonexistent/scene.json"]).status.code(), Some(2));
    let bad_chart = scene(tmp.path(), r#"{"chart": {"kind": "clifford_torus", "r": 1.5}, "tau": "0"}"#);
    assert_eq!(ribaucour(&["check", "--scene", &bad_chart]).status.code(), Some(2));
    let unknown = torus_scene(tmp.path(), r#""tau": "0", "colour": "red""#);
    assert_eq!(ribaucour(&["check", "--scene", &unknown]).status.code(), Some(2));
}

#[test]
fn zero_tau_gives_antipodal_torus() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "0", "grid": [8, 8]"#);
    let out = tmp.path().join("out");
    let o = ribaucour(&["transform", "--scene", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["report"]["residuals"]["involution"].as_f64().unwrap() < 1e-12);
    let read = |name: &str| parse_obj(&std::fs::read_to_string(out.join(name)).unwrap()).unwrap().0;
    let (f, hat) = (read("f.obj"), read("f_hat.obj"));
    // stereographic image of −x is −π(x)/|π(x)|²
    for (p, q) in f.iter().zip(&hat) {
        let n2: f64 = p.iter().map(|x| x * x).sum();
        for k in 0..3 {
            assert!((q[k] + p[k] / n2).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_two_is_a_parallel_transform() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "2", "grid": [8, 8], "outputs": ["csv"]"#);
    let out = tmp.path().join("out");
    let o = ribaucour(&["transform", "--scene", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.join("f.obj").exists());
    let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (ia, ib) = (header.iter().position(|h| *h == "a").unwrap(), header.iter().position(|h| *h == "b").unwrap());
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 64);
    for r in rows {
        assert!((r[ia] - 0.6).abs() < 1e-15 && (r[ib] + 0.8).abs() < 1e-15);
    }
}

#[test]
fn constant_family() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "0", "tau1": "2", "grid": [8, 8], "thetas": [0, 0.7853981633974483, 1.5707963267948966]"#);
    let out = tmp.path().join("out");
    let o = ribaucour(&["demoulin", "--scene", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(out.join("family.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let x: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(x[2], 0.0);
        assert!((x[3] - 1.0).abs() < 1e-15);
        assert_eq!(x[4], 2.0);
    }
    let fam: Value = serde_json::from_slice(&std::fs::read(out.join("family.json")).unwrap()).unwrap();
    assert_eq!(fam["report"]["members"].as_array().unwrap().len(), 3);
}

#[test]
fn family_rejects_non_ribaucour_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "0.3*sin(u)", "tau1": "sin(u)*sin(v)", "grid": [16, 16]"#);
    let o = ribaucour(&["demoulin", "--scene", &s, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a Ribaucour function"));
}

#[test]
fn theta_flag_and_dual_step() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(
        tmp.path(),
        r#""tau": "0.3*sin(u)", "tau1": "2", "grid": [16, 16], "dual": {"grid": [16, 16]}, "outputs": ["json"]"#,
    );
    let o = ribaucour(&["demoulin", "--scene", &s, "--theta", "0.1,-0.2", "--json", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let members = v["report"]["members"].as_array().unwrap();
    assert_eq!(members[1]["theta"], -0.2);
    assert!(v["report"]["dual"]["consistency"].as_f64().unwrap() < 1e-5);
}

#[test]
fn oracle_reports_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "exp(u)*cos(v)""#);
    let o = ribaucour(&["oracle", "--scene", &s, "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p = v["report"]["tau"]["grad_order"].as_f64().unwrap();
    assert!((p - 2.0).abs() < 0.3);
}

#[test]
fn pole_flip_changes_the_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let s = torus_scene(tmp.path(), r#""tau": "0", "grid": [8, 8], "outputs": ["obj"]"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ribaucour(&["export", "--scene", &s, "--out", a.to_str().unwrap()]);
    ribaucour(&["export", "--scene", &s, "--out", b.to_str().unwrap(), "--pole-flip"]);
    let ra = std::fs::read_to_string(a.join("f.obj")).unwrap();
    let rb = std::fs::read_to_string(b.join("f.obj")).unwrap();
    assert_ne!(ra, rb);
    assert_eq!(parse_obj(&rb).unwrap().1.len(), 64);
}
