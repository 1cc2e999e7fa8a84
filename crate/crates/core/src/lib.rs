//! Joint information and energy beamforming for a downlink Cloud-RAN whose
//! base stations run on harvested renewable energy.
//!
//! One data receiver (DR) and one energy receiver (ER) are served by `L`
//! single-antenna base stations over `N` slots. The crate computes
//!
//! * the maximum RF energy deliverable to the ER ([`energymax`]),
//! * the throughput-optimal offline schedule for a given RF floor and the
//!   resulting energy-throughput boundary ([`offline`]),
//! * a causal online heuristic ([`online`]) and a charge-then-transmit
//!   baseline ([`baseline`]),
//!
//! together with brute-force verifiers ([`oracle`]) and a Monte Carlo
//! experiment harness ([`harness`]).
//!
//! Rates are in nats per slot and energies in Joules throughout; the harness
//! converts to Mbit/s and µW on output.

pub mod baseline;
pub mod energymax;
mod error;
pub mod harness;
pub mod intervals;
mod lagrangian;
pub mod model;
pub mod offline;
pub mod online;
pub mod oracle;
pub mod slot_solver;

pub use error::{Error, Result};
pub use model::{
    BeamformingSchedule, ChannelState, EnergyProfile, Scenario, SystemParams, TradeoffCurve,
};

/// Complex baseband sample type used for channels and beamforming weights.
pub type C64 = num_complex::Complex64;
