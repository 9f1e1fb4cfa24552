use std::path::Path;

use aeon_sim::scenario::{LoadShape, PlacementSpec, PolicySpec};
use aeon_sim::{rapid_remigrations, run_sim, shape_violations, LoadedScenario, Scenario};

fn load(name: &str) -> LoadedScenario {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)).unwrap()
}

#[test]
fn triangle_load_grows_and_shrinks_the_cluster() {
    let sc = load("elasticity.toml");
    let window = sc.spec.policy.as_ref().unwrap().window();
    let out = run_sim(&sc).unwrap();
    let servers = out.report.server_series();
    assert_eq!(servers[0], 5);
    assert_eq!(out.report.summary.max_servers, 17);
    assert_eq!(shape_violations(&out.report.series, &sc.spec.workload.load, window), vec![]);
    assert!(rapid_remigrations(&out.report.migrations, window).is_empty());
    // The count passes through 9 on the way up before reaching 17.
    let first_9 = servers.iter().position(|s| *s == 9).unwrap();
    let first_17 = servers.iter().position(|s| *s == 17).unwrap();
    assert!(first_9 < first_17);
    // Back at the trough the cluster is small again.
    assert!(servers[599] <= 6, "{}", servers[599]);
    let s = &out.report.summary;
    assert_eq!((s.completed, s.outstanding, s.duplicates), (s.issued, 0, 0));
}

#[test]
fn steady_load_inside_the_cap_triggers_nothing() {
    let mut sc = load("migration.toml");
    sc.spec.migrations.clear();
    sc.spec.workload.max_events = None;
    sc.spec.cluster.placement = PlacementSpec { spread_depth: 99, ..Default::default() };
    sc.spec.policy = Some(PolicySpec::ServerContention { max_active: 4, window: 20, storage: None });
    let out = run_sim(&sc).unwrap();
    assert!(out.report.migrations.is_empty());
    assert!(out.report.summary.completed > 100);
}

#[test]
fn one_context_over_the_cap_moves_once() {
    let mut sc = load("migration.toml");
    sc.spec.migrations.clear();
    sc.spec.workload.max_events = None;
    sc.spec.cluster.placement = PlacementSpec { spread_depth: 99, ..Default::default() };
    sc.spec.policy = Some(PolicySpec::ServerContention { max_active: 3, window: 20, storage: None });
    let out = run_sim(&sc).unwrap();
    // Four busy tables on S0 with a cap of three: exactly one moves.
    assert_eq!(out.report.migrations.len(), 1, "{:?}", out.report.migrations);
}

#[test]
fn resource_policy_spreads_a_hot_server() {
    let mut sc = load("scale_independent_k1.toml");
    sc.spec.until = 400;
    sc.spec.policy = Some(PolicySpec::ResourceUtilization { lower: 10, upper: 60, threshold: 10, window: 25 });
    let out = run_sim(&sc).unwrap();
    assert!(out.report.summary.max_servers > 1);
    assert!(rapid_remigrations(&out.report.migrations, 25).is_empty());
    let s = &out.report.summary;
    assert_eq!((s.completed, s.outstanding), (s.issued, 0));
}

#[test]
fn constant_load_has_no_shape_to_violate() {
    let sc = load("migration.toml");
    let out = run_sim(&sc).unwrap();
    assert!(shape_violations(&out.report.series, &LoadShape::Constant, 20).is_empty());
}
