use std::path::Path;

use aeon_sim::{run_sim, LoadedScenario, Scenario};

fn load(name: &str) -> LoadedScenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let mut sc = load("migration.toml");
    sc.spec.cluster.jitter = 3;
    let header = serde_json::json!({ "run": "determinism" });
    let a = run_sim(&sc).unwrap().report;
    let b = run_sim(&sc).unwrap().report;
    assert_eq!(a.to_jsonl(&header), b.to_jsonl(&header));
    assert_eq!(a.to_csv(&header), b.to_csv(&header));
    sc.spec.seed += 1;
    let c = run_sim(&sc).unwrap().report;
    assert_ne!(a.to_jsonl(&header), c.to_jsonl(&header));
}

#[test]
fn no_clients_means_all_zero_metrics() {
    let mut sc = load("migration.toml");
    sc.spec.workload.clients = 0;
    sc.spec.migrations.clear();
    let r = run_sim(&sc).unwrap().report;
    let s = &r.summary;
    assert_eq!((s.issued, s.completed, s.failed, s.refusals, s.forwards, s.migrations), (0, 0, 0, 0, 0, 0));
    assert_eq!(s.throughput, 0.0);
    assert_eq!(s.latency.count, 0);
    assert!(r.series.iter().all(|t| t.issued == 0 && t.completed == 0 && t.work == 0));
}

#[test]
fn jsonl_starts_with_the_header_and_ends_with_the_summary() {
    let sc = load("migration.toml");
    let r = run_sim(&sc).unwrap().report;
    let text = r.to_jsonl(&serde_json::json!({ "command": "simulate" }));
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], "manifest");
    assert_eq!(lines[0]["command"], "simulate");
    assert_eq!(lines.last().unwrap()["kind"], "summary");
    assert_eq!(lines.iter().filter(|l| l["kind"] == "tick").count(), r.series.len());
    assert_eq!(lines.iter().filter(|l| l["kind"] == "migration").count(), 1);
    let csv = r.to_csv(&serde_json::json!({}));
    assert_eq!(csv.lines().nth(1), Some("tick,issued,completed,servers,active_clients,work"));
}

#[test]
fn independent_throughput_grows_with_servers() {
    let mut last = 0.0;
    for k in [1, 2, 4, 8] {
        let mut sc = load("scale_independent_k1.toml");
        sc.spec.cluster.servers = k;
        sc.spec.until = 200;
        let t = run_sim(&sc).unwrap().report.summary.throughput;
        assert!(t > last, "k={k}: {t} after {last}");
        last = t;
    }
}

#[test]
fn bad_scenarios_are_rejected() {
    assert!(Scenario::from_toml("until = 1\n[cluster]\nservers = 1\nbogus = 2\n").is_err());
    let sc = Scenario::from_toml("until = 1\nsource = 'main { }'\n[cluster]\nservers = 0\n").unwrap();
    assert!(sc.resolve(Path::new(".")).is_err());
}
