use std::path::Path;
use std::process::Command;

use maxreglab::harness::{Scenario, BUILTIN_IDS};
use maxreglab::solver::{PicardOptions, SolveMethod};

fn maxreglab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_maxreglab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_scenario(dir: &Path, s: &Scenario) -> String {
    let path = dir.join(format!("{}.json", s.id));
    std::fs::write(&path, s.to_json().unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = maxreglab(&["solve", "zero", "--threads", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "norms.csv", "constants.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out.join("norms.csv")).unwrap();
    assert!(header.starts_with("path,t,normX0,normX1,normTrace"));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains(&Scenario::builtin("zero").unwrap().hash()));
}

#[test]
fn constants_and_converge() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = maxreglab(&["constants", "hilbert_sharp", "--paths", "400", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("constants.csv")).unwrap();
    assert!(text.starts_with("kind,p,value,stderr,probe,notes"));
    assert_eq!(text.lines().count(), 3);

    let out = dir.path().join("v");
    let o = maxreglab(&["converge", "dirichlet_interval", "--grids", "32,64,128", "--paths", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(text.starts_with("dt,K,error,rate"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": 1}").unwrap();
    assert_eq!(maxreglab(&["solve", bad.to_str().unwrap(), "--out", out]).status.code(), Some(4));
    assert_eq!(maxreglab(&["solve", "no_such_scenario", "--out", out]).status.code(), Some(4));

    let mut s = Scenario::builtin("contraction").unwrap();
    s.drift[0].coeff = 1.5;
    s.declared.drift.l = 1.5;
    s.declared.drift.growth = 1.5;
    let path = write_scenario(dir.path(), &s);
    assert_eq!(maxreglab(&["solve", &path, "--out", out]).status.code(), Some(2));

    let mut s = Scenario::builtin("contraction").unwrap();
    s.id = "starved".into();
    s.solver.method = SolveMethod::Picard(PicardOptions {
        max_iter: 2,
        ..PicardOptions::default()
    });
    let path = write_scenario(dir.path(), &s);
    assert_eq!(maxreglab(&["solve", &path, "--out", out]).status.code(), Some(3));
}

#[test]
fn shipped_scenarios_match_builtins() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for id in BUILTIN_IDS {
        let s = Scenario::load(&dir.join(format!("{id}.json"))).unwrap();
        assert_eq!(s, Scenario::builtin(id).unwrap(), "{id}");
    }
}
