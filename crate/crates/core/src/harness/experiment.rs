use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{generate_scenario, trial_seed, ScenarioConfig};
use super::{energy_from_uw, power_uw, rate_mbps};
use crate::baseline::run_baseline;
use crate::energymax::solve_qmax;
use crate::model::{BeamformingSchedule, Scenario};
use crate::offline::{solve_offline_with, OfflineOptions, OfflineSolution};
use crate::online::run_online;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Offline,
    Online,
    Baseline,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Offline, Scheme::Online, Scheme::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Offline => "offline",
            Scheme::Online => "online",
            Scheme::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Scheme::Offline),
            "online" => Ok(Scheme::Online),
            "baseline" => Ok(Scheme::Baseline),
            _ => Err(Error::InvalidParameter(format!("unknown scheme {s:?}"))),
        }
    }
}

/// RF floors to evaluate in every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QGrid {
    /// Fractions of each trial's own q_max.
    Fractions(Vec<f64>),
    /// Average charging power in µW, the same for every trial.
    MicroWatts(Vec<f64>),
}

impl QGrid {
    /// `points` evenly spaced fractions from 0 to 1.
    pub fn region(points: usize) -> Self {
        let k = points.max(2);
        QGrid::Fractions((0..k).map(|i| i as f64 / (k - 1) as f64).collect())
    }

    fn len(&self) -> usize {
        match self {
            QGrid::Fractions(v) | QGrid::MicroWatts(v) => v.len(),
        }
    }

    fn floor(&self, i: usize, q_max: f64, scenario: &Scenario) -> f64 {
        match self {
            QGrid::Fractions(v) => (v[i] * q_max).min(q_max),
            QGrid::MicroWatts(v) => {
                energy_from_uw(v[i], scenario.params.num_slots, scenario.params.slot_length)
            }
        }
    }
}

/// Outcome of one scheme on one scenario at one floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeRun {
    pub throughput: f64,
    pub rf_energy: f64,
    pub shortfall: f64,
    pub schedule: BeamformingSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub trial: usize,
    pub q_index: usize,
    /// Requested floor (J, post-η).
    pub q_target: f64,
    /// Achieved average charging power, µW.
    pub q_avg_uw: f64,
    /// Achieved average rate, Mbit/s.
    pub r_avg_mbps: f64,
    pub rho: f64,
    pub q_max: f64,
    pub throughput: f64,
    pub rf_energy: f64,
    pub shortfall: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<BeamformingSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub scheme: Scheme,
    pub trial: usize,
    pub q_index: usize,
    pub q_target: f64,
    pub infeasible: bool,
    pub message: String,
}

/// Mean over the successful trials of one scheme at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanPoint {
    pub scheme: Scheme,
    pub q_index: usize,
    pub q_avg_uw: f64,
    pub r_avg_mbps: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub means: Vec<MeanPoint>,
    /// Correlation factor of every trial, indexed by trial.
    pub rho: Vec<f64>,
    /// Closed-form q_max of every trial (J).
    pub q_max: Vec<f64>,
}

impl ExperimentResult {
    pub fn mean(&self, scheme: Scheme, q_index: usize) -> Option<&MeanPoint> {
        self.means.iter().find(|m| m.scheme == scheme && m.q_index == q_index)
    }
}

/// Runs one scheme at one floor. Offline solves accept a warm start and
/// fall back to their best feasible iterate only if it meets the accepted gap.
pub fn run_scheme(
    scenario: &Scenario,
    scheme: Scheme,
    q: f64,
    warm: Option<&OfflineSolution>,
) -> Result<(SchemeRun, Option<OfflineSolution>)> {
    match scheme {
        Scheme::Offline => {
            let sol = solve_offline_with(scenario, q, &OfflineOptions::default(), warm)?;
            let run = SchemeRun {
                throughput: sol.throughput,
                rf_energy: sol.rf_energy,
                shortfall: 0.0,
                schedule: sol.schedule.clone(),
            };
            Ok((run, Some(sol)))
        }
        Scheme::Online => {
            // The heuristic reports a shortfall rather than failing; a target
            // no schedule can meet is still an infeasible request.
            let q_max = solve_qmax(&scenario.profile, &scenario.channels.g, &scenario.params)?.q_max;
            if q > q_max * (1.0 + 1e-9) {
                return Err(Error::Infeasible { requested: q, achievable: q_max });
            }
            let out = run_online(scenario, q)?;
            Ok((
                SchemeRun {
                    throughput: out.throughput,
                    rf_energy: out.rf_energy,
                    shortfall: out.shortfall,
                    schedule: out.schedule,
                },
                None,
            ))
        }
        Scheme::Baseline => {
            let out = run_baseline(scenario, q)?;
            Ok((
                SchemeRun {
                    throughput: out.throughput,
                    rf_energy: out.rf_energy,
                    shortfall: 0.0,
                    schedule: out.schedule,
                },
                None,
            ))
        }
    }
}

struct TrialOutput {
    records: Vec<TrialRecord>,
    failures: Vec<TrialFailure>,
    rho: f64,
    q_max: f64,
}

fn run_trial(
    config: &ScenarioConfig,
    trial: usize,
    schemes: &[Scheme],
    grid: &QGrid,
    keep_schedules: bool,
) -> Result<TrialOutput> {
    let scenario = generate_scenario(config, trial_seed(config.rng_seed, trial))?;
    let params = &scenario.params;
    let rho = scenario.channels.correlation();
    let q_max = solve_qmax(&scenario.profile, &scenario.channels.g, params)?.q_max;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &scheme in schemes {
        let mut warm: Option<OfflineSolution> = None;
        for i in 0..grid.len() {
            let q = grid.floor(i, q_max, &scenario);
            match run_scheme(&scenario, scheme, q, warm.as_ref()) {
                Ok((run, sol)) => {
                    if sol.is_some() {
                        warm = sol;
                    }
                    records.push(TrialRecord {
                        scheme,
                        trial,
                        q_index: i,
                        q_target: q,
                        q_avg_uw: power_uw(run.rf_energy, params.num_slots, params.slot_length),
                        r_avg_mbps: rate_mbps(run.throughput, params.num_slots, params.bandwidth),
                        rho,
                        q_max,
                        throughput: run.throughput,
                        rf_energy: run.rf_energy,
                        shortfall: run.shortfall,
                        schedule: keep_schedules.then_some(run.schedule),
                    });
                }
                Err(e) => failures.push(TrialFailure {
                    scheme,
                    trial,
                    q_index: i,
                    q_target: q,
                    infeasible: matches!(e, Error::Infeasible { .. }),
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(TrialOutput {
        records,
        failures,
        rho,
        q_max,
    })
}

/// Runs `config.trials` independent realizations in parallel. Per-point
/// solver failures are recorded, not propagated; configuration errors are.
pub fn run_experiment(
    config: &ScenarioConfig,
    schemes: &[Scheme],
    grid: &QGrid,
    keep_schedules: bool,
) -> Result<ExperimentResult> {
    config.validate()?;
    let outputs = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t, schemes, grid, keep_schedules))
        .collect::<Result<Vec<_>>>()?;

    let rho = outputs.iter().map(|o| o.rho).collect();
    let q_max = outputs.iter().map(|o| o.q_max).collect();
    let mut records: Vec<TrialRecord> = Vec::new();
    let mut failures: Vec<TrialFailure> = Vec::new();
    for o in outputs {
        records.extend(o.records);
        failures.extend(o.failures);
    }
    records.sort_by_key(|r| (r.scheme, r.q_index, r.trial));
    failures.sort_by_key(|f| (f.scheme, f.q_index, f.trial));

    let mut means = Vec::new();
    for &scheme in schemes {
        for i in 0..grid.len() {
            let pts: Vec<&TrialRecord> = records.iter().filter(|r| r.scheme == scheme && r.q_index == i).collect();
            if pts.is_empty() {
                continue;
            }
            let n = pts.len() as f64;
            means.push(MeanPoint {
                scheme,
                q_index: i,
                q_avg_uw: pts.iter().map(|r| r.q_avg_uw).sum::<f64>() / n,
                r_avg_mbps: pts.iter().map(|r| r.r_avg_mbps).sum::<f64>() / n,
                trials: pts.len(),
            });
        }
    }
    Ok(ExperimentResult {
        records,
        failures,
        means,
        rho,
        q_max,
    })
}
