//! Quality-of-service models for the LoRaWAN uplink under duty cycling.
//!
//! The crate predicts per-device uplink latency, per-sub-band service ratios
//! and collision rates when transmissions are constrained by regulatory
//! (per-sub-band) and aggregated (per-device) duty cycles, and validates the
//! predictions with a deterministic discrete-event simulator.
//!
//! Modules:
//!
//! - [`bandplan`] — sub-bands, radio and traffic configuration, scenario files
//! - [`airtime`] — LoRa time-on-air, holding times, service rates
//! - [`queueing`] — the jockeying multi-server Markov chain, Erlang-C,
//!   waiting-time and service-ratio formulas, the M/D/1 traffic shaper
//! - [`collision`] — per-(sub-band, spreading-factor) offered load and
//!   unslotted-ALOHA collision probabilities
//! - [`sim`] — discrete-event simulation of class-A devices
//! - [`analysis`] — ties the analytic pieces into per-arrival-rate reports

pub mod airtime;
pub mod analysis;
pub mod bandplan;
pub mod collision;
pub mod queueing;
pub mod sim;

pub use bandplan::{BandPlan, RadioParams, Scenario, SubBand, TrafficModel};
