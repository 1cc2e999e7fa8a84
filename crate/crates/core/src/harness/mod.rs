//! Scenario generation, Monte Carlo experiments and result files.

mod config;
mod emit;
mod experiment;

pub use config::{generate_scenario, trial_seed, ScenarioConfig};
pub use emit::{emit, write_csv, write_json, CsvRow, OutputFormat};
pub use experiment::{
    run_experiment, run_scheme, ExperimentResult, MeanPoint, QGrid, Scheme, SchemeRun, TrialFailure,
    TrialRecord,
};

/// Average rate in Mbit/s from a total of `nats` over `slots` slots.
pub fn rate_mbps(nats: f64, slots: usize, bandwidth: f64) -> f64 {
    nats / slots as f64 / std::f64::consts::LN_2 * bandwidth / 1e6
}

/// Average RF charging power in µW from `joules` over `slots` slots.
pub fn power_uw(joules: f64, slots: usize, slot_length: f64) -> f64 {
    joules / slots as f64 / slot_length * 1e6
}

/// Inverse of [`power_uw`].
pub fn energy_from_uw(uw: f64, slots: usize, slot_length: f64) -> f64 {
    uw * 1e-6 * slot_length * slots as f64
}
