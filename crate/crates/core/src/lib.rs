//! Deterministic discrete-event simulator for urban sensor data collection
//! over a vehicular delay-tolerant network.
//!
//! Stationary roadside sensors produce small readings that opportunistically
//! hop across cars and buses until they reach a roadside point of presence
//! (PoP), which uplinks them to a central server. The crate models the road
//! map, node mobility, radio contacts, store-carry-forward routing policies,
//! and the resulting delivery/latency/overhead metrics. Runs with the same
//! scenario and seed produce byte-identical event logs.

pub mod engine;
pub mod geo;
pub mod metrics;
pub mod mobility;
pub mod net;
pub mod rng;
pub mod routing;
pub mod scenario;

pub use engine::{simulate, World};
pub use metrics::{kpi_report, EventLog, KpiReport};
pub use routing::{NodeId, Policy, SprayMode};
pub use scenario::{load_scenario, ScenarioConfig};
