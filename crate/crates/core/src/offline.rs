//! Offline optimum: the full harvest profile is known in advance.
//!
//! The horizon is cut into the merged power-changing intervals, beams are
//! held constant inside each interval and the interval problem is solved in
//! the Lagrangian dual. When constant beams would overspend a battery inside
//! an interval, the interval is split at the offending slot and the problem is
//! solved again.

use serde::Serialize;

use crate::energymax::solve_qmax;
use crate::intervals::{changing_slots, merge, partition, IntervalPartition};
use crate::lagrangian::{DualOptions, DualProblem};
use crate::model::{check_causality, inner, BeamformingSchedule, Scenario, TradeoffCurve};
use crate::{Error, Result, C64};

/// Relative slack on `q ≤ q_max`.
const QMAX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOptions {
    /// Stop once the relative duality gap is below this.
    pub target_gap: f64,
    /// Largest gap reported as success.
    pub accept_gap: f64,
    /// Newton iterations per dual solve.
    pub max_iter: usize,
    /// Interval splits allowed before giving up on causality.
    pub max_refinements: usize,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions {
            target_gap: 1e-9,
            accept_gap: 1e-3,
            max_iter: 200,
            max_refinements: 64,
        }
    }
}

/// Optimal multipliers: `lambda[m][l]` per Joule, `mu` per Joule of pre-η RF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineDual {
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSolution {
    pub schedule: BeamformingSchedule,
    pub per_interval_w: Vec<Vec<C64>>,
    pub partition: IntervalPartition,
    /// Total throughput T in nats.
    pub throughput: f64,
    /// Total RF charged energy Q in Joules (post-η).
    pub rf_energy: f64,
    /// Requested RF floor (post-η).
    pub q: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    /// `None` on the closed-form paths (no energy, or q = q_max).
    pub dual: Option<OfflineDual>,
    #[serde(skip)]
    warm: Option<Vec<f64>>,
}

pub fn solve_offline(scenario: &Scenario, q: f64) -> Result<OfflineSolution> {
    solve_offline_with(scenario, q, &OfflineOptions::default(), None)
}

/// Solves with explicit options, optionally warm-started from a solution of
/// the same scenario at a nearby floor.
pub fn solve_offline_with(
    scenario: &Scenario,
    q: f64,
    opts: &OfflineOptions,
    warm: Option<&OfflineSolution>,
) -> Result<OfflineSolution> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("RF floor must be a finite nonnegative number, got {q}")));
    }
    let params = &scenario.params;
    let emax = solve_qmax(&scenario.profile, &scenario.channels.g, params)?;
    if q > emax.q_max * (1.0 + QMAX_TOL) {
        return Err(Error::Infeasible {
            requested: q,
            achievable: emax.q_max,
        });
    }
    if scenario.profile.grand_total() == 0.0 {
        let schedule = BeamformingSchedule::zeros(params, &scenario.channels);
        let n = params.num_slots;
        return Ok(OfflineSolution {
            schedule,
            per_interval_w: vec![vec![C64::new(0.0, 0.0); params.num_bs]],
            partition: merge(&vec![vec![n]; params.num_bs], n)?,
            throughput: 0.0,
            rf_energy: 0.0,
            q,
            dual_value: 0.0,
            gap: 0.0,
            iterations: 0,
            dual: None,
            warm: None,
        });
    }
    if q > 0.0 && q >= emax.q_max * (1.0 - QMAX_TOL) {
        return full_charge(scenario, q);
    }

    let mut part = partition(&scenario.profile);
    let mut start = warm.and_then(|w| w.warm.clone());
    let dual_opts = DualOptions {
        tol: opts.target_gap,
        max_iter: opts.max_iter,
    };
    let mut iterations = 0;
    for _ in 0..=opts.max_refinements {
        let lengths = part.lengths();
        let harvest: Vec<Vec<f64>> = (0..part.num_intervals())
            .map(|m| {
                let r = part.slots(m);
                (0..params.num_bs)
                    .map(|l| scenario.profile.row(l)[r.clone()].iter().sum())
                    .collect()
            })
            .collect();
        let problem = DualProblem::new(
            &lengths,
            &harvest,
            &scenario.channels.h,
            &scenario.channels.g,
            params.noise_variance,
            q / params.eta,
        );
        let out = problem.solve(start.as_deref(), &dual_opts);
        iterations += out.iterations;

        let w: Vec<Vec<C64>> = (0..params.num_slots)
            .map(|n| out.beams[part.interval_of(n)].clone())
            .collect();
        let schedule = BeamformingSchedule::new(w, params, &scenario.channels)?;
        debug_assert!((schedule.total_rate() - out.throughput).abs() <= 1e-6 * out.throughput.max(1.0));
        let check = check_causality(&schedule, &scenario.profile);
        if let (Some((_, n)), true) = (check.first_violation, out.feasible) {
            let before = part.num_intervals();
            part.split_at(n + 1);
            if part.num_intervals() > before {
                start = None;
                continue;
            }
        }

        let sol = OfflineSolution {
            throughput: schedule.total_rate(),
            rf_energy: schedule.total_rf_energy(),
            schedule,
            per_interval_w: out.beams,
            partition: part,
            q,
            dual_value: out.dual_value,
            gap: out.gap,
            iterations,
            dual: Some(OfflineDual {
                lambda: out.lambda,
                mu: out.mu,
            }),
            warm: Some(out.point),
        };
        let causal = check.is_causal();
        if !out.feasible || !causal || sol.gap > opts.accept_gap {
            return Err(Error::Convergence {
                gap: sol.gap,
                iterations,
                best: (out.feasible && causal).then(|| Box::new(sol)),
            });
        }
        return Ok(sol);
    }
    Err(Error::Convergence {
        gap: f64::INFINITY,
        iterations,
        best: None,
    })
}

/// At q = q_max every beam points along the energy-maximizing direction; only
/// the sum power sequence is free. It is water-filled against the tightest
/// per-BS budget.
fn full_charge(scenario: &Scenario, q: f64) -> Result<OfflineSolution> {
    let params = &scenario.params;
    let profile = &scenario.profile;
    let emax = solve_qmax(profile, &scenario.channels.g, params)?;
    let ratios: Vec<f64> = emax.w0.iter().map(|x| x.norm_sqr()).collect();
    let cums: Vec<Vec<f64>> = (0..profile.num_bs()).map(|l| profile.cumulative(l)).collect();
    let budget: Vec<f64> = (0..params.num_slots)
        .map(|n| {
            (0..profile.num_bs())
                .filter(|&l| ratios[l] > 0.0)
                .map(|l| cums[l][n] / ratios[l])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let inflow: Vec<f64> = budget
        .iter()
        .enumerate()
        .map(|(n, b)| (b - if n == 0 { 0.0 } else { budget[n - 1] }).max(0.0))
        .collect();
    let segments = changing_slots(&inflow)?;
    let boundaries: Vec<usize> = segments.iter().map(|s| s.0).collect();
    // Rotate so the data receiver sees a real positive gain.
    let rot = {
        let z = inner(&scenario.channels.h, &emax.w0);
        if z.norm() > 0.0 { z.conj() / z.norm() } else { C64::new(1.0, 0.0) }
    };
    let per_interval_w: Vec<Vec<C64>> = segments
        .iter()
        .map(|&(_, level)| {
            let a = (level * (1.0 - 1e-12)).sqrt();
            emax.w0.iter().map(|x| x * rot * a).collect()
        })
        .collect();
    let part = IntervalPartition {
        boundaries: boundaries.clone(),
        per_bs_changing_slots: vec![boundaries; params.num_bs],
    };
    let w: Vec<Vec<C64>> = (0..params.num_slots)
        .map(|n| per_interval_w[part.interval_of(n)].clone())
        .collect();
    let schedule = BeamformingSchedule::new(w, params, &scenario.channels)?;
    let throughput = schedule.total_rate();
    Ok(OfflineSolution {
        rf_energy: schedule.total_rf_energy(),
        schedule,
        per_interval_w,
        partition: part,
        throughput,
        q,
        dual_value: throughput,
        gap: 0.0,
        iterations: 0,
        dual: None,
        warm: None,
    })
}

/// Floors `q_i = i·q_max/(K−1)` for `K = num_points`.
pub fn sweep_floors(q_max: f64, num_points: usize) -> Vec<f64> {
    (0..num_points)
        .map(|i| q_max * i as f64 / (num_points - 1) as f64)
        .collect()
}

/// Offline solutions along the region boundary, each warm-started from the
/// previous floor.
pub fn sweep_solutions(scenario: &Scenario, num_points: usize) -> Result<Vec<OfflineSolution>> {
    if num_points < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least 2 points".into()));
    }
    let q_max = solve_qmax(&scenario.profile, &scenario.channels.g, &scenario.params)?.q_max;
    let floors = if q_max > 0.0 { sweep_floors(q_max, num_points) } else { vec![0.0] };
    let opts = OfflineOptions::default();
    let mut out: Vec<OfflineSolution> = Vec::with_capacity(floors.len());
    for q in floors {
        let sol = solve_offline_with(scenario, q, &opts, out.last())?;
        out.push(sol);
    }
    Ok(out)
}

/// Samples the energy-throughput boundary at `num_points` evenly spaced
/// floors. A scenario without RF capability yields the single point `(0, T)`.
pub fn sweep_region(scenario: &Scenario, num_points: usize) -> Result<TradeoffCurve> {
    let q_max = solve_qmax(&scenario.profile, &scenario.channels.g, &scenario.params)?.q_max;
    let points = sweep_solutions(scenario, num_points)?
        .iter()
        .map(|s| (s.q, s.throughput))
        .collect();
    Ok(TradeoffCurve { points, q_max })
}

/// Constraint violations of the lifted covariances `W_m = w_m w_mᴴ` in the
/// interval problem, each relative to the scale of its constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedResiduals {
    /// `max(0, q/η − Σ I_m tr(W_m G))` over `q/η`.
    pub rf: f64,
    /// Largest cumulative overspend at an interval end over the BS's total harvest.
    pub causality: f64,
    /// Largest `|tr(W_m) − ‖w_m‖²|`, zero unless the lift is inconsistent.
    pub trace: f64,
}

impl LiftedResiduals {
    pub fn max(&self) -> f64 {
        self.rf.max(self.causality).max(self.trace)
    }
}

pub fn lifted_residuals(scenario: &Scenario, sol: &OfflineSolution) -> LiftedResiduals {
    let l_count = scenario.params.num_bs;
    let g = &scenario.channels.g;
    let lengths = sol.partition.lengths();
    let mut rf = 0.0;
    let mut trace: f64 = 0.0;
    let mut spent = vec![0.0; l_count];
    let mut causality: f64 = 0.0;
    for (m, w) in sol.per_interval_w.iter().enumerate() {
        // Explicit outer product, traced against G = g gᴴ entrywise.
        let cov: Vec<Vec<C64>> = w.iter().map(|a| w.iter().map(|b| a * b.conj()).collect()).collect();
        let mut tr_wg = C64::new(0.0, 0.0);
        for i in 0..l_count {
            for j in 0..l_count {
                tr_wg += cov[i][j] * (g[j] * g[i].conj());
            }
        }
        rf += lengths[m] as f64 * tr_wg.re;
        let tr: f64 = (0..l_count).map(|i| cov[i][i].re).sum();
        trace = trace.max((tr - w.iter().map(|x| x.norm_sqr()).sum::<f64>()).abs());
        let end = sol.partition.boundaries[m];
        for l in 0..l_count {
            spent[l] += lengths[m] as f64 * cov[l][l].re;
            let harvested: f64 = scenario.profile.row(l)[..end].iter().sum();
            let total = scenario.profile.total(l).max(f64::MIN_POSITIVE);
            causality = causality.max((spent[l] - harvested) / total);
        }
    }
    let target = sol.q / scenario.params.eta;
    LiftedResiduals {
        rf: if target > 0.0 { ((target - rf) / target).max(0.0) } else { 0.0 },
        causality: causality.max(0.0),
        trace,
    }
}

/// True when every slot of every interval carries the same beam.
pub fn equal_allocation_holds(sol: &OfflineSolution) -> bool {
    (0..sol.partition.num_intervals()).all(|m| {
        sol.partition
            .slots(m)
            .all(|n| sol.schedule.beams()[n] == sol.per_interval_w[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervals::dwt_levels;
    use crate::model::{ChannelState, EnergyProfile, SystemParams};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scenario(h: Vec<C64>, g: Vec<C64>, e: Vec<Vec<f64>>, s2: f64) -> Scenario {
        let (l, n) = (e.len(), e[0].len());
        Scenario::new(
            SystemParams::new(l, n, 1.0, s2, 0.5, 1e6).unwrap(),
            ChannelState::new(h, g).unwrap(),
            EnergyProfile::new(e).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_bs_matches_water_filling_for_every_floor() {
        let e = vec![1.0, 0.2, 3.0, 0.5];
        let s = scenario(vec![c(0.6, 0.8)], vec![c(0.0, 2.0)], vec![e.clone()], 0.3);
        let levels = dwt_levels(&e).unwrap();
        let expect: f64 = levels.iter().map(|p| (1.0 + p / 0.3).ln()).sum();
        let q_max = solve_qmax(&s.profile, &s.channels.g, &s.params).unwrap().q_max;
        for frac in [0.0, 0.4, 0.9, 1.0] {
            let sol = solve_offline(&s, frac * q_max).unwrap();
            assert_relative_eq!(sol.throughput, expect, max_relative = 1e-6);
            assert!(sol.rf_energy >= frac * q_max - 1e-6 * q_max);
        }
    }

    #[test]
    fn infeasible_floor_is_rejected() {
        let s = scenario(vec![c(1.0, 0.0)], vec![c(1.0, 0.0)], vec![vec![1.0, 1.0]], 1.0);
        let err = solve_offline(&s, 1.01).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn zero_energy_gives_zero_schedule() {
        let s = scenario(
            vec![c(1.0, 0.0), c(0.0, 1.0)],
            vec![c(1.0, 0.0), c(1.0, 0.0)],
            vec![vec![0.0; 3], vec![0.0; 3]],
            1.0,
        );
        let sol = solve_offline(&s, 0.0).unwrap();
        assert_eq!(sol.throughput, 0.0);
    }

    #[test]
    fn two_bs_solution_is_feasible_and_tight() {
        let s = scenario(
            vec![c(0.9, 0.1), c(-0.3, 0.7)],
            vec![c(0.2, -0.8), c(0.6, 0.3)],
            vec![vec![1.0, 0.1, 2.0], vec![0.3, 1.5, 0.2]],
            0.05,
        );
        let q_max = solve_qmax(&s.profile, &s.channels.g, &s.params).unwrap().q_max;
        let mut prev = f64::INFINITY;
        for frac in [0.0, 0.25, 0.5, 0.75, 0.99, 1.0] {
            let sol = solve_offline(&s, frac * q_max).unwrap();
            assert!(check_causality(&sol.schedule, &s.profile).is_causal());
            assert!(sol.rf_energy >= frac * q_max - 1e-6 * q_max);
            assert!(sol.gap <= 1e-3);
            assert!(equal_allocation_holds(&sol));
            assert!(lifted_residuals(&s, &sol).max() <= 1e-6);
            assert!(sol.throughput <= prev + 1e-6);
            prev = sol.throughput;
        }
    }

    #[test]
    fn sweep_is_monotone() {
        let s = scenario(
            vec![c(0.9, 0.1), c(-0.3, 0.7), c(0.1, 0.1)],
            vec![c(0.2, -0.8), c(0.6, 0.3), c(1.0, 0.0)],
            vec![vec![1.0, 0.1, 2.0, 0.4], vec![0.3, 1.5, 0.2, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
            0.1,
        );
        let curve = sweep_region(&s, 6).unwrap();
        assert_eq!(curve.points.len(), 6);
        assert!(curve.is_well_formed(1e-6));
    }
}
