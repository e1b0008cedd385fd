//! Highway vehicular network simulator for V2V dead-end recovery.
//!
//! Alerts are relayed vehicle-to-vehicle toward a roadside unit (RSU) with
//! greedy geographic forwarding. When a relay has no neighbor closer to the
//! RSU (a dead end) the message is recovered either by the backward V2V
//! recovery procedure (V2V-RA) or by an LTE device-to-device bridge hop
//! followed by a resumed V2V leg.
//!
//! The crate is organised bottom-up:
//!
//! - [`config`]: scenario descriptions, the key/value file format and presets
//! - [`mobility`]: vehicle placement and IDM car-following on a ring road
//! - [`radio`]: unit-disk connectivity, neighbor tables, per-hop delay
//! - [`routing`]: greedy forwarding, broadcast relay and V2V-RA recovery
//! - [`d2d`]: discovery timing, overhead accounting and the D2D bridge
//! - [`engine`]: the deterministic discrete-event loop
//! - [`metrics`]: per-message records, sweep aggregation and CSV output
//! - [`cli`]: the `hybrid-vanet` command line

pub mod cli;
pub mod config;
pub mod d2d;
pub mod engine;
pub mod ids;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod routing;

pub use config::{D2dMode, ScenarioConfig, TimingModel};
pub use engine::{run, SimResult};
pub use ids::{NodeId, RsuId, VehicleId};
