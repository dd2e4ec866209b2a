use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn manifests() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests")
}

fn witten(args: &[&str], manifest: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_witten"))
        .args(args)
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("manifest.json");
    fs::write(&p, text).unwrap();
    p
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn flat_torus_harmonic_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let o = witten(&["spectrum"], &manifests().join("torus_spectrum.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("# witten results csv v1"));
    let harmonic = |p: &str| csv.lines().filter(|l| l.starts_with(&format!("{p},harmonic,"))).count();
    assert_eq!([harmonic("0"), harmonic("1"), harmonic("2")], [1, 2, 1]);
    let s = summary(tmp.path());
    assert_eq!(s["passed"], Value::Bool(true));
    assert_eq!(s["name"], "flat torus, constant weight");
}

#[test]
fn sphere_band_collapse() {
    let tmp = tempfile::tempdir().unwrap();
    let o = witten(&["collapse"], &manifests().join("sphere_collapse.json"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    let d = &s["metrics"]["degrees"][0];
    assert_eq!(d["d_p"], 1);
    assert_eq!(d["vanishing"], serde_json::json!([0]));
    assert!(tmp.path().join("plotdata/collapse_p1.csv").exists());
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(
        tmp.path(),
        r#"{"mesh":{"icosphere":3},"phi":"0.5*z","degrees":[1],"samples":3,"amplitudes":[0.3,0.6],"k":2}"#,
    );
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = witten(&["conformal-sweep", "--seed", seed], &m, &out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_manifests_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in [
        r#"{"mesh":{"icosphere":2},"bogus":true}"#,
        r#"{"mesh":{"icosphere":2},"phi":"sin("}"#,
        r#"{"mesh":{"file":"missing.json"}}"#,
        r#"{"mesh":{"icosphere":2},"degrees":[5]}"#,
        "not json",
    ] {
        let m = write_manifest(tmp.path(), text);
        let o = witten(&["spectrum"], &m, &out);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!o.stderr.is_empty());
    }
    let o = witten(&["collapse"], &manifests().join("torus_spectrum.json"), &out);
    assert_eq!(o.status.code(), Some(2), "collapse without epsilons");
}

#[test]
fn failed_assertion_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_manifest(tmp.path(), r#"{"mesh":{"icosphere":2},"phi":"x","degrees":[0],"k":3,"assert_tol":1e-300}"#);
    let out = tmp.path().join("out");
    let o = witten(&["oracle"], &m, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed assertion"));
    let s = summary(&out);
    assert_eq!(s["passed"], Value::Bool(false));
}

#[test]
fn shipped_manifests_parse() {
    for entry in fs::read_dir(manifests()).unwrap() {
        let p = entry.unwrap().path();
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v.get("mesh").is_some(), "{}", p.display());
    }
}
