//! Deterministic discrete-event simulator for (m,k)-frame QoS control in a
//! distributed video-on-demand system.

pub mod cli;
pub mod fairshare;
pub mod mk;
pub mod replication;
pub mod scalar;
pub mod sim;
pub mod stream;

pub use sim::Strategy;

/// Double-precision aliases.
pub type Frame = stream::Frame<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type SimReport = sim::SimReport<f64>;
pub type MetricsSample = sim::MetricsSample<f64>;
pub type ReplicateSummary = sim::ReplicateSummary<f64>;
pub type ExperimentPlan = cli::ExperimentPlan<f64>;
