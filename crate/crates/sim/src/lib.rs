//! Discrete-event cluster simulator: servers, message latency, context
//! maps, live migration and elasticity policies around the event engine.

pub mod cluster;
pub mod metrics;
pub mod migration;
pub mod policy;
pub mod scenario;
pub mod sim;

pub use cluster::{Admission, ClusterError, ClusterState, DeliveryPlan, Hop, ServerId};
pub use metrics::{rapid_remigrations, shape_violations, MetricsReport, SnapshotRecord, Summary, TickSample};
pub use migration::{Migration, MigrationPhase};
pub use policy::{ElasticityPolicy, Move, PolicyView};
pub use scenario::{LoadedScenario, Scenario, ScenarioError};
pub use sim::{run_sim, SimError, SimOutcome, Simulation};
