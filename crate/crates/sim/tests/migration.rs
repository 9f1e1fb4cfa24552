use std::path::{Path, PathBuf};

use aeon_core::graph::ContextId;
use aeon_sim::{run_sim, ClusterError, LoadedScenario, Migration, MigrationPhase, Scenario, ServerId, SimError, Simulation};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> LoadedScenario {
    Scenario::load(&scenarios().join(name)).unwrap()
}

fn only_migration(ms: &[Migration]) -> &Migration {
    assert_eq!(ms.len(), 1, "{ms:?}");
    &ms[0]
}

#[test]
fn idle_context_moves_in_two_round_trips_plus_transfer() {
    let mut sc = load("migration.toml");
    sc.spec.workload.clients = 0;
    sc.spec.migrations[0].at = 10;
    let out = run_sim(&sc).unwrap();
    let m = only_migration(&out.report.migrations);
    let l = sc.spec.cluster.latency;
    assert_eq!(m.phase, MigrationPhase::Done);
    // prepare + ack, stop + ack, then the `migrate` message to the source.
    assert_eq!(m.done_at.unwrap() - m.started, 4 * l + l + m.transfer_ticks);
    assert_eq!(m.transfer_ticks, 1);
    assert_eq!(out.cluster.host[&ContextId::new("Table0")], ServerId(1));
    assert_eq!(out.report.summary.issued, 0);
}

#[test]
fn transfer_time_follows_state_size_and_bandwidth() {
    let mut sc = load("migration.toml");
    sc.spec.workload.clients = 0;
    sc.spec.cluster.bandwidth = 4;
    let out = run_sim(&sc).unwrap();
    let m = only_migration(&out.report.migrations);
    let bytes = serde_json::to_vec(&out.config.context(&ContextId::new("Table0")).unwrap().store).unwrap().len() as u64;
    assert_eq!(m.transfer_ticks, bytes.div_ceil(4));
}

fn under_load(delta: u64) {
    let mut sc = load("migration.toml");
    sc.spec.cluster.delta = delta;
    let out = run_sim(&sc).unwrap();
    let s = &out.report.summary;
    assert_eq!(s.issued, 100);
    assert_eq!((s.completed, s.failed, s.outstanding, s.duplicates), (100, 0, 0, 0));
    assert!(s.serializability.checked && s.serializability.pass, "{:?}", s.serializability);
    let m = only_migration(&out.report.migrations);
    let bound = delta + sc.spec.cluster.latency;
    assert!(m.unavailable_ticks().unwrap() <= bound, "{m:?}");
    // Each committed event is in the engine history once.
    let mut eids: Vec<_> = out.config.history().iter().map(|h| h.eid.clone()).collect();
    eids.sort();
    eids.dedup();
    assert_eq!(eids.len(), 100);
}

#[test]
fn events_during_the_move_run_exactly_once_without_delay() {
    under_load(0);
}

#[test]
fn events_during_the_move_run_exactly_once_with_delay() {
    under_load(5);
}

#[test]
fn shared_context_waits_for_the_events_holding_it() {
    let mut sc = load("scale_single_dominator_k1.toml");
    sc.spec.cluster.servers = 2;
    sc.spec.until = 400;
    sc.spec.workload.clients = 8;
    sc.spec.workload.max_events = Some(60);
    sc.spec.check_serializability = true;
    sc.spec.migrations = vec![aeon_sim::scenario::MigrationSpec { at: 40, ctx: "Pot".into(), to: Some(1) }];
    let out = run_sim(&sc).unwrap();
    let s = &out.report.summary;
    assert_eq!((s.completed, s.outstanding, s.duplicates), (60, 0, 0));
    assert!(s.serializability.pass, "{:?}", s.serializability);
    let m = only_migration(&out.report.migrations);
    assert!(m.transfer_started_at.unwrap() >= m.migrate_queued_at.unwrap());
    assert_eq!(out.cluster.host[&ContextId::new("Pot")], ServerId(1));
}

#[test]
fn second_migration_of_the_same_context_is_refused() {
    let sc = load("migration.toml");
    let mut sim = Simulation::new(&sc).unwrap();
    let t0 = ContextId::new("Table0");
    sim.migrate(&t0, ServerId(1)).unwrap();
    let err = sim.migrate(&t0, ServerId(1)).unwrap_err();
    assert!(matches!(err, SimError::Cluster(ClusterError::MigrationInFlight(c)) if c == t0));
    assert!(matches!(sim.migrate(&ContextId::new("Table1"), ServerId(9)), Err(SimError::Cluster(ClusterError::UnknownServer(_)))));
}

#[test]
#[should_panic(expected = "cannot go from")]
fn phases_never_go_backwards() {
    let mut m = Migration::new(ContextId::new("X"), ServerId(0), ServerId(1), 0);
    m.advance(MigrationPhase::Remap);
    m.advance(MigrationPhase::Stop);
}
