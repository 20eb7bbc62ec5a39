//! Packet-level discrete-event simulator: ring-road mobility, per-RAT
//! broadcast CSMA channels with log-normal shadowing, context exchange,
//! busy-ratio measurement, and the delivery/satisfaction metrics used to
//! compare selection schemes.
//!
//! A run is single-threaded and fully deterministic: one event queue with
//! a total (time, sequence) order, one seeded random stream, and all
//! per-vehicle iteration in vehicle-id order. Distinct runs share nothing
//! and can execute in parallel.

pub mod airspace;
pub mod channel;
pub mod engine;
pub mod events;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod phys;

pub use engine::{run_simulation, AppProfile, Scheme, SimAssets, SimConfig, SimError};
pub use metrics::MetricsReport;
