//! Browser demo. The `*_json` functions are plain Rust and return JSON
//! strings; the `#[wasm_bindgen]` wrappers only forward to them.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use swipt_cran::energymax::{f_e, solve_qmax};
use swipt_cran::harness::{power_uw, rate_mbps, generate_scenario, run_scheme, trial_seed, ScenarioConfig, Scheme};
use swipt_cran::offline::sweep_floors;
use swipt_cran::slot_solver::{solve_fr, SlotProblem};
use swipt_cran::Scenario;

#[derive(Serialize)]
struct Curve {
    scheme: &'static str,
    /// (µW, Mbps) pairs; infeasible floors are left out.
    points: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Tradeoff {
    q_max_uw: f64,
    rho: f64,
    curves: Vec<Curve>,
}

#[derive(Serialize)]
struct EnergyBeam {
    q_max_uw: f64,
    /// Per-BS |w0_l|² and phase of the shared energy direction.
    power_share: Vec<f64>,
    phase: Vec<f64>,
    /// Sum transmit energy per slot, Joules.
    power_schedule: Vec<f64>,
    /// Harvested energy per BS and slot, Joules.
    harvest: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SlotCurve {
    /// Pre-η maximum RF power for this slot.
    f_e: f64,
    /// (floor, rate in nats) pairs.
    points: Vec<[f64; 2]>,
    gaps: Vec<f64>,
}

fn scenario(config_json: &str, trial: u32) -> Result<Scenario, String> {
    let text = if config_json.trim().is_empty() { "{}" } else { config_json };
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    generate_scenario(&cfg, trial_seed(cfg.rng_seed, trial as usize)).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Rate/energy tradeoff of all three schemes on one realization.
pub fn tradeoff_json(config_json: &str, trial: u32, points: u32) -> Result<String, String> {
    let s = scenario(config_json, trial)?;
    let p = &s.params;
    let q_max = solve_qmax(&s.profile, &s.channels.g, p).map_err(|e| e.to_string())?.q_max;
    let floors = sweep_floors(q_max, points.max(2) as usize);
    let curves = Scheme::ALL
        .iter()
        .map(|&scheme| {
            let mut warm = None;
            let mut pts = Vec::new();
            for &q in &floors {
                if let Ok((run, sol)) = run_scheme(&s, scheme, q, warm.as_ref()) {
                    if sol.is_some() {
                        warm = sol;
                    }
                    pts.push([
                        power_uw(run.rf_energy, p.num_slots, p.slot_length),
                        rate_mbps(run.throughput, p.num_slots, p.bandwidth),
                    ]);
                }
            }
            Curve { scheme: scheme.name(), points: pts }
        })
        .collect();
    to_json(&Tradeoff {
        q_max_uw: power_uw(q_max, p.num_slots, p.slot_length),
        rho: s.channels.correlation(),
        curves,
    })
}

/// Energy-maximizing beam direction and its causal power schedule.
pub fn energy_beam_json(config_json: &str, trial: u32) -> Result<String, String> {
    let s = scenario(config_json, trial)?;
    let sol = solve_qmax(&s.profile, &s.channels.g, &s.params).map_err(|e| e.to_string())?;
    to_json(&EnergyBeam {
        q_max_uw: power_uw(sol.q_max, s.params.num_slots, s.params.slot_length),
        power_share: sol.w0.iter().map(|x| x.norm_sqr()).collect(),
        phase: sol.w0.iter().map(|x| x.arg()).collect(),
        power_schedule: sol.power_schedule,
        harvest: (0..s.params.num_bs).map(|l| s.profile.row(l).to_vec()).collect(),
    })
}

/// Single-slot rate as the RF floor moves from 0 to its maximum, with
/// per-BS powers `p` (Joules) on the channels of one realization.
pub fn slot_curve_json(config_json: &str, trial: u32, p: &[f64], points: u32) -> Result<String, String> {
    let s = scenario(config_json, trial)?;
    let (h, g) = (&s.channels.h, &s.channels.g);
    let fe = f_e(p, g).map_err(|e| e.to_string())?;
    let n = points.max(2) as usize;
    let mut out = SlotCurve { f_e: fe, points: Vec::new(), gaps: Vec::new() };
    for k in 0..n {
        let q = fe * k as f64 / (n - 1) as f64;
        let prob = SlotProblem { p: p.to_vec(), q, h: h.clone(), g: g.clone(), noise_variance: s.params.noise_variance };
        let sol = solve_fr(&prob).map_err(|e| e.to_string())?;
        out.points.push([q, sol.rate]);
        out.gaps.push(sol.gap);
    }
    to_json(&out)
}

#[wasm_bindgen]
pub fn tradeoff(config_json: &str, trial: u32, points: u32) -> Result<String, JsError> {
    tradeoff_json(config_json, trial, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn energy_beam(config_json: &str, trial: u32) -> Result<String, JsError> {
    energy_beam_json(config_json, trial).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn slot_curve(config_json: &str, trial: u32, p: Vec<f64>, points: u32) -> Result<String, JsError> {
    slot_curve_json(config_json, trial, &p, points).map_err(|e| JsError::new(&e))
}
