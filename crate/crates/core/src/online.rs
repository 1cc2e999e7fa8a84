//! Causal online heuristic: each slot spends a common fraction `k_n` of the
//! per-BS average harvest rates, limited by the emptiest battery, and asks for
//! a share of the RF target proportional to `k_n`. The final slot makes up
//! whatever is still missing.

use serde::Serialize;

use crate::energymax::f_e;
use crate::model::{BeamformingSchedule, ChannelState, Scenario, SystemParams};
use crate::slot_solver::{solve_fr, SlotProblem};
use crate::{Error, Result, C64};

/// Where the per-BS average harvest rates `P_H` come from.
#[derive(Debug, Clone, PartialEq)]
pub enum HarvestRates {
    /// Known means in Watts.
    Known(Vec<f64>),
    /// Running average of the arrivals observed so far, current slot included.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineState {
    /// Battery level of each BS before the current slot's arrival (J).
    pub residual: Vec<f64>,
    /// Zero-based index of the next slot.
    pub slot: usize,
    /// RF energy delivered so far (post-η, J).
    pub rf_delivered: f64,
    /// Sum of the per-slot floors requested so far (pre-η).
    pub floors_requested: f64,
    /// Average harvest per slot (J) used for the current slot.
    pub avg_rates: Vec<f64>,
    observed: Vec<f64>,
}

impl OnlineState {
    pub fn new(num_bs: usize) -> Self {
        OnlineState {
            residual: vec![0.0; num_bs],
            slot: 0,
            rf_delivered: 0.0,
            floors_requested: 0.0,
            avg_rates: vec![0.0; num_bs],
            observed: vec![0.0; num_bs],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutput {
    pub w: Vec<C64>,
    /// nats.
    pub rate: f64,
    /// Planned per-BS spend `p_n` (J).
    pub power: Vec<f64>,
    pub k: f64,
    /// RF floor asked of the slot solver (pre-η).
    pub floor: f64,
    /// Unmet RF energy in this slot (post-η), nonzero only in the last slot.
    pub shortfall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineOutcome {
    pub schedule: BeamformingSchedule,
    pub throughput: f64,
    pub rf_energy: f64,
    /// Unmet part of the RF target (post-η, J).
    pub shortfall: f64,
    /// Per-slot floors `q_n` (pre-η).
    pub floors: Vec<f64>,
    pub k: Vec<f64>,
}

/// Advances the scheduler by one slot.
///
/// `arrival` is this slot's harvest per BS and `q_total` the RF target for
/// the whole horizon (post-η). `rates` are per-slot means in Joules.
pub fn step(
    state: &mut OnlineState,
    arrival: &[f64],
    q_total: f64,
    rates: &HarvestRates,
    channels: &ChannelState,
    params: &SystemParams,
) -> Result<StepOutput> {
    let lc = params.num_bs;
    if arrival.len() != lc {
        return Err(Error::DimensionMismatch {
            what: "arrival vector",
            expected: lc,
            found: arrival.len(),
        });
    }
    if state.slot >= params.num_slots {
        return Err(Error::InvalidParameter("horizon already completed".into()));
    }
    let n = state.slot;
    for l in 0..lc {
        state.residual[l] += arrival[l];
        state.observed[l] += arrival[l];
    }
    state.avg_rates = match rates {
        HarvestRates::Known(r) => {
            if r.len() != lc {
                return Err(Error::DimensionMismatch {
                    what: "harvest rates",
                    expected: lc,
                    found: r.len(),
                });
            }
            r.iter().map(|x| x * params.slot_length).collect()
        }
        HarvestRates::Empirical => state.observed.iter().map(|x| x / (n + 1) as f64).collect(),
    };

    let k = (0..lc)
        .filter(|&l| state.avg_rates[l] > 0.0)
        .map(|l| state.residual[l].max(0.0) / state.avg_rates[l])
        .fold(f64::INFINITY, f64::min);
    let k = if k.is_finite() { k } else { 0.0 };
    let power: Vec<f64> = (0..lc)
        .map(|l| (k * state.avg_rates[l]).min(state.residual[l].max(0.0)))
        .collect();
    let fe = f_e(&power, &channels.g)?;

    let target = q_total / params.eta;
    let last = n + 1 == params.num_slots;
    let mut floor = if last {
        target - state.floors_requested
    } else {
        (k / params.num_slots as f64 * target).min(fe)
    };
    let mut shortfall = 0.0;
    if last && floor > fe * (1.0 + 1e-9) {
        shortfall = (floor - fe) * params.eta;
        floor = fe;
    }
    let prob = SlotProblem {
        p: power.clone(),
        q: floor.max(0.0).min(fe),
        h: channels.h.clone(),
        g: channels.g.clone(),
        noise_variance: params.noise_variance,
    };
    let sol = solve_fr(&prob)?;

    for l in 0..lc {
        state.residual[l] -= power[l];
    }
    state.floors_requested += floor;
    state.rf_delivered += params.eta * crate::model::inner(&channels.g, &sol.w).norm_sqr();
    state.slot += 1;
    Ok(StepOutput {
        rate: sol.rate,
        w: sol.w,
        power,
        k,
        floor,
        shortfall,
    })
}

/// Runs the heuristic over the whole horizon using the scenario's known
/// harvest rates, or empirical estimates when none are given.
pub fn run_online(scenario: &Scenario, q_total: f64) -> Result<OnlineOutcome> {
    let rates = match &scenario.harvest_rates {
        Some(r) => HarvestRates::Known(r.clone()),
        None => HarvestRates::Empirical,
    };
    run_online_with(scenario, q_total, &rates)
}

pub fn run_online_with(scenario: &Scenario, q_total: f64, rates: &HarvestRates) -> Result<OnlineOutcome> {
    if !(q_total >= 0.0) || !q_total.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "RF target must be a finite nonnegative number, got {q_total}"
        )));
    }
    let params = &scenario.params;
    let mut state = OnlineState::new(params.num_bs);
    let mut beams = Vec::with_capacity(params.num_slots);
    let mut floors = Vec::with_capacity(params.num_slots);
    let mut ks = Vec::with_capacity(params.num_slots);
    let mut shortfall = 0.0;
    for n in 0..params.num_slots {
        let arrival: Vec<f64> = (0..params.num_bs).map(|l| scenario.profile.get(l, n)).collect();
        let out = step(&mut state, &arrival, q_total, rates, &scenario.channels, params)?;
        beams.push(out.w);
        floors.push(out.floor);
        ks.push(out.k);
        shortfall += out.shortfall;
    }
    let schedule = BeamformingSchedule::new(beams, params, &scenario.channels)?;
    Ok(OnlineOutcome {
        throughput: schedule.total_rate(),
        rf_energy: schedule.total_rf_energy(),
        schedule,
        shortfall,
        floors,
        k: ks,
    })
}
