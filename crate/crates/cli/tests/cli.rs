use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delottery-sim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scenario"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let s = scenario("forfeiture");
    let r = run(&["run", "--scenario", s.to_str().unwrap(), "--seeds", "3", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let v = run(&["verify", "--report", out.to_str().unwrap()]);
    assert!(v.status.success(), "{}", stderr(&v));
}

#[test]
fn two_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("honest-small");
    let mut bodies = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let r = run(&["run", "--scenario", s.to_str().unwrap(), "--seeds", "2", "--base-seed", "5", "--out", out.to_str().unwrap()]);
        assert!(r.status.success());
        bodies.push(std::fs::read(out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let s = scenario("honest-small");
    let r = run(&[
        "run", "--scenario", s.to_str().unwrap(), "--mode", "naive", "--pool-mode", "literal",
        "--base-seed", "9", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let body = std::fs::read_to_string(out).unwrap();
    assert!(body.contains(r#""mode": "naive""#));
    assert!(body.contains(r#""pool_mode": "literal""#));
    assert!(body.contains(r#""base_seed": 9"#));

    let r = run(&["run", "--scenario", s.to_str().unwrap(), "--mode", "coin-flip", "--out", "/dev/null"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("commit-reveal, naive"));
}

#[test]
fn csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let s = scenario("honest-small");
    let r = run(&["run", "--scenario", s.to_str().unwrap(), "--format", "csv", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let body = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "seed,player,address_hex,wins,final_balance");
    assert_eq!(lines.len(), 4);
}

#[test]
fn tampered_report_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let s = scenario("honest-small");
    assert!(run(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let body = std::fs::read_to_string(&out).unwrap();
    let tampered = body.replacen(r#""conservation_residual": 0"#, r#""conservation_residual": 5"#, 1);
    assert_ne!(body, tampered);
    std::fs::write(&out, tampered).unwrap();
    let v = run(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stderr(&v).contains("conservation residual 5"));

    std::fs::write(&out, r#"{"scenario_name": "x"}"#).unwrap();
    let v = run(&["verify", "--report", out.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(2));
}

#[test]
fn bad_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.scenario");
    std::fs::write(&path, "name = bad\nrounds = lots\n").unwrap();
    let r = run(&["run", "--scenario", path.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("line 2"), "{}", stderr(&r));
}

#[test]
fn dumps_use_record_formats() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let s = scenario("node-attack-naive");
    let r = run(&[
        "run", "--scenario", s.to_str().unwrap(), "--out", dir.path().join("r.json").to_str().unwrap(),
        "--dump", dump.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", stderr(&r));
    let read = |n: &str| std::fs::read_to_string(dump.join(n)).unwrap();

    let chain = read("chain.csv");
    let first: Vec<&str> = chain.lines().next().unwrap().split(',').collect();
    assert_eq!(first.len(), 5);
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0".repeat(64));

    let transcript = read("transcript.csv");
    for line in transcript.lines() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 6);
        assert!(f[3] == "0" || f[3] == "1");
        assert_eq!(f[3] == "0", f[4] == "-");
    }
    assert_eq!(read("settlement.csv").lines().next().unwrap().split(',').count(), 6);
    let attack = read("node_attack.csv");
    assert!(attack.starts_with("naive,0.3,"), "{attack}");
    assert_eq!(attack.trim().split(',').count(), 5);
}
