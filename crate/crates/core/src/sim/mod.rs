//! Discrete-event simulation of the video-on-demand system.

pub mod arrivals;
pub mod config;
pub mod controller;
pub mod engine;
pub mod event;
pub mod metrics;
pub mod network;
pub mod replicates;

pub use arrivals::draw_arrivals;
pub use config::{ConfigError, SimConfig, Strategy};
pub use controller::FeedbackController;
pub use engine::{
    run_report, run_simulation, ControllerPeriod, ReplicationRecord, RequestOutcome, RequestRecord,
    Route, RunStats, Scenario, ScriptedRequest, SimReport, Simulation,
};
pub use event::{EventKind, EventQueue, Payload};
pub use metrics::{collect_metrics, BucketClose, BucketCounters, LossCause, Metric, MetricsSample, Rates};
pub use network::{network_step, Fate};
pub use replicates::{run_replicates, ReplicateSummary};
