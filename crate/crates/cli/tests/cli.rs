use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn aeon(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeon")).env("AEON_OUT_DIR", out).args(args).output().expect("binary runs")
}

fn scn(name: &str) -> String {
    scenarios().join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_accepts_the_game() {
    let dir = tempfile::tempdir().unwrap();
    let o = aeon(dir.path(), &["check", &scn("game.aeon")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).ends_with(": ok\n"));
}

#[test]
fn check_rejects_a_cycle_and_an_ro_write_with_positions() {
    let dir = tempfile::tempdir().unwrap();
    let o = aeon(dir.path(), &["check", &scn("cycle.aeon")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("cycle.aeon:2:1: ownership_cycle: class ownership cycle: Alpha -> Beta -> Alpha"), "{}", stdout(&o));
    let o = aeon(dir.path(), &["check", &scn("ro_write.aeon")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("ro_write.aeon:6:5: readonly:"), "{}", stdout(&o));
}

#[test]
fn check_reports_syntax_errors_as_records() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.aeon");
    std::fs::write(&bad, "context A {\n  field x int;\n}\n").unwrap();
    let o = aeon(dir.path(), &["--format", "records", "check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let first: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!((first["line"].as_u64(), first["kind"].as_str()), (Some(2), Some("syntax")));
}

#[test]
fn explore_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let th = scn("treasure_horse.aeon");
    let o = aeon(dir.path(), &["explore", &th]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = std::fs::read_to_string(dir.path().join("explore-report.txt")).unwrap();
    assert!(report.starts_with("# {\"command\":\"explore\""));
    assert!(report.contains("verdict: PASS"));
    assert!(!dir.path().join("witness.trace.jsonl").exists());

    let o = aeon(dir.path(), &["explore", &th, "--unsafe-no-dominator"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("cycle "));
    let witness = dir.path().join("witness.trace.jsonl");
    let o = aeon(dir.path(), &["replay", witness.to_str().unwrap(), "--program", &th]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = aeon(dir.path(), &["explore", &scn("game.aeon"), "--bound", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn explore_with_replaced_events_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = aeon(dir.path(), &["--format", "records", "explore", &scn("treasure_horse.aeon"), "--events", "Player1.grab();Player1.grab()"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("explore-report.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], "manifest");
    assert_eq!(lines[1]["verdict"], "pass");
}

#[test]
fn hidden_hooks_stay_out_of_help() {
    let dir = tempfile::tempdir().unwrap();
    let o = aeon(dir.path(), &["explore", "--help"]);
    let help = stdout(&o);
    assert!(help.contains("--bound"));
    assert!(!help.contains("unsafe"));
    assert!(!help.contains("unshared"));
}

#[test]
fn simulate_writes_deterministic_metrics() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = scn("elasticity.toml");
    for d in [&a, &b] {
        let o = aeon(d.path(), &["simulate", &sc, "--seed", "3", "--until", "300"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["metrics.jsonl", "metrics.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let csv = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("# {\"command\":\"simulate\""));
    let servers: Vec<usize> = csv.lines().skip(2).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(servers[0], 5);
    assert!(servers.iter().max().unwrap() > &5);
}

#[test]
fn simulate_with_no_clients_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("idle.toml");
    std::fs::write(&sc, format!("program = '{}'\nuntil = 50\n[cluster]\nservers = 2\n", scn("tables.aeon"))).unwrap();
    let o = aeon(dir.path(), &["--format", "records", "simulate", sc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    for k in ["issued", "completed", "failed", "outstanding", "refusals", "migrations"] {
        assert_eq!(s[k], 0, "{k}");
    }
    assert_eq!(s["throughput"], 0.0);
}

#[test]
fn replay_accepts_fresh_traces_and_locates_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let game = scn("game.aeon");
    let o = aeon(dir.path(), &["--seed", "9", "run", &game]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = dir.path().join("run.trace.jsonl");
    let o = aeon(dir.path(), &["replay", trace.to_str().unwrap(), "--program", &game]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let text = std::fs::read_to_string(&trace).unwrap();
    // Swap steps 5 and 6.
    let mut lines: Vec<&str> = text.lines().collect();
    let (i, j) = (1 + 5, 1 + 6);
    lines.swap(i, j);
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, lines.join("\n")).unwrap();
    let o = aeon(dir.path(), &["replay", tampered.to_str().unwrap(), "--program", &game]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("step 5"), "{}", stderr(&o));

    let old = text.replacen("\"schema\":1", "\"schema\":0", 1);
    let old_path = dir.path().join("old.jsonl");
    std::fs::write(&old_path, old).unwrap();
    let o = aeon(dir.path(), &["replay", old_path.to_str().unwrap(), "--program", &game]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("schema mismatch"), "{}", stderr(&o));
}
