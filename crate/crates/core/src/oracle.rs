//! Brute-force references for the closed-form and dual solvers. Slow and
//! deterministic for a given seed; meant for tests and small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::energymax::{f_e, greedy_power_schedule};
use crate::intervals::dwt_levels;
use crate::model::{inner, ChannelState, Scenario};
use crate::slot_solver::{fr_value, SlotProblem};
use crate::C64;

fn random_direction(rng: &mut ChaCha8Rng, l: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..l)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// RF energy (post-η) of the fixed direction `d` with greedy causal powers.
fn direction_rf(scenario: &Scenario, d: &[C64]) -> f64 {
    let n = d.iter().map(|x| x.norm_sqr()).sum::<f64>();
    if n == 0.0 {
        return 0.0;
    }
    let ratios: Vec<f64> = d.iter().map(|x| x.norm_sqr() / n).collect();
    let total: f64 = greedy_power_schedule(&scenario.profile, &ratios).iter().sum();
    scenario.params.eta * total * inner(&scenario.channels.g, d).norm_sqr() / n
}

/// Best RF energy over random fixed-direction causal schedules: directions
/// uniform on the complex unit sphere (half of them on a random support),
/// then a shrinking-radius local search around the incumbent for the last
/// quarter of the budget.
pub fn random_search_qmax(scenario: &Scenario, samples: usize, seed: u64) -> f64 {
    random_search_qmax_with(scenario, samples, seed, &[])
}

/// As [`random_search_qmax`] with extra candidate directions evaluated first.
pub fn random_search_qmax_with(scenario: &Scenario, samples: usize, seed: u64, candidates: &[Vec<C64>]) -> f64 {
    let l = scenario.params.num_bs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::NEG_INFINITY, vec![C64::new(0.0, 0.0); l]);
    for c in candidates {
        let v = direction_rf(scenario, c);
        if v > best.0 {
            best = (v, c.clone());
        }
    }
    let global = samples - samples / 4;
    for k in 0..global.max(1) {
        let mut d = random_direction(&mut rng, l);
        // Every other sample lives on a random support so BSs that never
        // harvest can be switched off exactly.
        if k % 2 == 1 && l > 1 {
            let keep: Vec<bool> = (0..l).map(|_| rng.random_bool(0.5)).collect();
            if keep.iter().any(|&x| x) {
                d.iter_mut().zip(&keep).filter(|(_, &k)| !k).for_each(|(x, _)| *x = C64::new(0.0, 0.0));
            }
        }
        let v = direction_rf(scenario, &d);
        if v > best.0 {
            best = (v, d);
        }
    }
    let mut radius = 0.3;
    for k in 0..samples / 4 {
        let mut d = best.1.clone();
        match k % 3 {
            0 => {
                let step = random_direction(&mut rng, l);
                d.iter_mut().zip(&step).for_each(|(a, b)| *a += b * radius);
            }
            // Single-entry moves: magnitude, then phase. These follow the
            // kinks where one BS's battery binds.
            1 => {
                let z: f64 = rng.sample(StandardNormal);
                d[rng.random_range(0..l)] *= (radius * z).exp();
            }
            _ => {
                let z: f64 = rng.sample(StandardNormal);
                d[rng.random_range(0..l)] *= C64::from_polar(1.0, radius * z);
            }
        }
        let v = direction_rf(scenario, &d);
        if v > best.0 {
            best = (v, d);
            radius = (radius * 1.2).min(0.3);
        } else {
            radius = (radius * 0.995).max(1e-6);
        }
    }
    best.0.max(0.0)
}

/// Exhaustive search for the single-slot problem over per-BS amplitudes on
/// `[0, √p_l]` and phases relative to BS 0, followed by zoomed re-gridding
/// around the best points. Returns `-∞` if no grid point meets the floor.
pub fn grid_search_fr(prob: &SlotProblem, grid_density: usize) -> f64 {
    let l = prob.p.len();
    let d = grid_density.max(2);
    let amp_max: Vec<f64> = prob.p.iter().map(|p| p.sqrt()).collect();
    let tau = std::f64::consts::TAU;
    let eval = |x: &[f64]| -> f64 {
        // x = [a_0..a_{L-1}, θ_1..θ_{L-1}]
        let w: Vec<C64> = (0..l)
            .map(|i| {
                let th = if i == 0 { 0.0 } else { x[l + i - 1] };
                C64::from_polar(x[i].clamp(0.0, amp_max[i]), th)
            })
            .collect();
        if inner(&prob.g, &w).norm_sqr() < prob.q {
            return f64::NEG_INFINITY;
        }
        (inner(&prob.h, &w).norm_sqr() / prob.noise_variance).ln_1p()
    };

    let dims = 2 * l - 1;
    let axes: Vec<Vec<f64>> = (0..dims)
        .map(|k| {
            if k < l {
                (0..=d).map(|i| amp_max[k] * i as f64 / d as f64).collect()
            } else {
                (0..2 * d).map(|i| tau * i as f64 / (2 * d) as f64).collect()
            }
        })
        .collect();
    let mut top: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; dims];
    loop {
        let x: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| axes[k][i]).collect();
        let v = eval(&x);
        if v.is_finite() {
            top.push((v, x));
            if top.len() > 64 {
                top.sort_by(|a, b| b.0.total_cmp(&a.0));
                top.truncate(8);
            }
        }
        let mut k = 0;
        loop {
            if k == dims {
                break;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dims {
            break;
        }
    }
    if top.is_empty() {
        return f64::NEG_INFINITY;
    }
    top.sort_by(|a, b| b.0.total_cmp(&a.0));
    top.truncate(8);

    let mut best = top[0].0;
    for (mut v, mut x) in top {
        let mut span: Vec<f64> = (0..dims)
            .map(|k| if k < l { amp_max[k] / d as f64 } else { tau / (2 * d) as f64 })
            .collect();
        for _ in 0..40 {
            // 5-point stencil per axis, one axis at a time.
            for k in 0..dims {
                for s in [-2.0, -1.0, 1.0, 2.0] {
                    let mut y = x.clone();
                    y[k] += s * span[k] / 2.0;
                    if k < l {
                        y[k] = y[k].clamp(0.0, amp_max[k]);
                    }
                    let vy = eval(&y);
                    if vy > v {
                        v = vy;
                        x = y;
                    }
                }
            }
            span.iter_mut().for_each(|s| *s *= 0.7);
        }
        // Joint random moves slide along the RF floor, where axis steps stall.
        let mut rng = ChaCha8Rng::seed_from_u64(v.to_bits());
        let mut sigma = 0.05;
        for _ in 0..4000 {
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(k, &xi)| {
                    let z: f64 = rng.sample(StandardNormal);
                    let scale = if k < l { amp_max[k] } else { std::f64::consts::PI };
                    let y = xi + sigma * scale * z;
                    if k < l { y.clamp(0.0, amp_max[k]) } else { y }
                })
                .collect();
            let vy = eval(&y);
            if vy > v {
                v = vy;
                x = y;
                sigma = (sigma * 1.5).min(0.1);
            } else {
                sigma = (sigma * 0.99).max(1e-9);
            }
        }
        best = best.max(v);
    }
    best
}

/// Largest midpoint-concavity violation of `f_R` over random feasible
/// pairs `(p, q)`, `q ≤ f_E(p)`, and mixing weights.
pub fn concavity_probe(channels: &ChannelState, noise_variance: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = channels.num_bs();
    let mut worst = f64::NEG_INFINITY;
    let f = |p: &[f64], q: f64| fr_value(p, q, &channels.h, &channels.g, noise_variance);
    for _ in 0..trials {
        let mut point = || {
            let p: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..2.0)).collect();
            let q = rng.random_range(0.0..1.0) * f_e(&p, &channels.g).expect("valid power");
            (p, q)
        };
        let (p1, q1) = point();
        let (p2, q2) = point();
        let a: f64 = rng.random_range(0.0..1.0);
        let pm: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let qm = a * q1 + (1.0 - a) * q2;
        if let (Ok(v1), Ok(v2), Ok(vm)) = (f(&p1, q1), f(&p2, q2), f(&pm, qm)) {
            worst = worst.max(a * v1 + (1.0 - a) * v2 - vm);
        }
    }
    worst
}

/// Throughput of per-BS water-filled powers, each slot served by the
/// data-only single-slot optimum.
pub fn dwt_composition_throughput(scenario: &Scenario) -> f64 {
    let l = scenario.params.num_bs;
    let levels: Vec<Vec<f64>> = (0..l)
        .map(|i| dwt_levels(scenario.profile.row(i)).expect("valid profile"))
        .collect();
    (0..scenario.params.num_slots)
        .map(|n| {
            let p: Vec<f64> = levels.iter().map(|row| row[n]).collect();
            fr_value(
                &p,
                0.0,
                &scenario.channels.h,
                &scenario.channels.g,
                scenario.params.noise_variance,
            )
            .expect("data-only slot problem is feasible")
        })
        .sum()
}

/// Per-slot beams from `x`: for every slot and BS a fraction of the current
/// battery and a phase. Causal by construction.
fn decode(scenario: &Scenario, x: &[f64]) -> Vec<Vec<C64>> {
    let (l, n) = (scenario.params.num_bs, scenario.params.num_slots);
    let mut battery = vec![0.0; l];
    (0..n)
        .map(|t| {
            (0..l)
                .map(|i| {
                    battery[i] += scenario.profile.get(i, t);
                    let k = 2 * (t * l + i);
                    let spend = battery[i] * x[k].clamp(0.0, 1.0);
                    battery[i] -= spend;
                    C64::from_polar(spend.sqrt(), x[k + 1])
                })
                .collect()
        })
        .collect()
}

fn schedule_value(scenario: &Scenario, beams: &[Vec<C64>], q: f64) -> f64 {
    let p = &scenario.params;
    let rf: f64 = beams.iter().map(|w| p.eta * inner(&scenario.channels.g, w).norm_sqr()).sum();
    if rf < q {
        return f64::NEG_INFINITY;
    }
    beams
        .iter()
        .map(|w| (inner(&scenario.channels.h, w).norm_sqr() / p.noise_variance).ln_1p())
        .sum()
}

/// Brute-force offline optimum for tiny instances: adaptive random search
/// over per-slot battery fractions and phases from several starts, keeping
/// only points that meet the RF floor `q` (post-η). Returns `-∞` if no start
/// is feasible.
pub fn search_offline(scenario: &Scenario, q: f64, starts: usize, evals_per_start: usize, seed: u64) -> f64 {
    let (l, n) = (scenario.params.num_bs, scenario.params.num_slots);
    let dims = 2 * l * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = &scenario.channels.h;
    let g = &scenario.channels.g;
    // Structured starts: every battery emptied, phases aligned to g (most RF)
    // or to h (most rate).
    let aligned = |ch: &[C64], frac: f64| -> Vec<f64> {
        let mut x = vec![0.0; dims];
        for t in 0..n {
            for i in 0..l {
                x[2 * (t * l + i)] = if t + 1 == n { 1.0 } else { frac };
                x[2 * (t * l + i) + 1] = ch[i].arg();
            }
        }
        x
    };
    let mut seeds = vec![aligned(g, 1.0), aligned(g, 0.5), aligned(h, 0.5), aligned(h, 1.0)];
    // Water-filling powers with phases blended between h and g.
    let levels: Vec<Vec<f64>> = (0..l)
        .map(|i| dwt_levels(scenario.profile.row(i)).expect("valid profile"))
        .collect();
    let scale = h.iter().map(|x| x.norm()).sum::<f64>() / g.iter().map(|x| x.norm()).sum::<f64>().max(1e-300);
    for c in [0.0, 0.5, 1.0, 2.0] {
        let mut x = vec![0.0; dims];
        let mut battery = vec![0.0; l];
        for t in 0..n {
            for i in 0..l {
                battery[i] += scenario.profile.get(i, t);
                let k = 2 * (t * l + i);
                x[k] = if battery[i] > 0.0 { (levels[i][t] / battery[i]).min(1.0) } else { 0.0 };
                battery[i] -= battery[i] * x[k];
                x[k + 1] = (h[i] + g[i] * (c * scale)).arg();
            }
        }
        seeds.push(x);
    }
    while seeds.len() < starts {
        let x: Vec<f64> = (0..dims)
            .map(|k| {
                if k % 2 == 0 {
                    rng.random_range(0.0..1.0)
                } else {
                    rng.random_range(0.0..std::f64::consts::TAU)
                }
            })
            .collect();
        seeds.push(x);
    }
    let mut best = f64::NEG_INFINITY;
    for mut x in seeds.into_iter().take(starts.max(1)) {
        let mut v = schedule_value(scenario, &decode(scenario, &x), q);
        let mut sigma = 0.2;
        for e in 0..evals_per_start {
            // Alternate full-vector and single-coordinate moves.
            let only = (e % 2 == 1).then(|| rng.random_range(0..dims));
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(k, &xi)| {
                    if only.is_some_and(|j| j != k) {
                        return xi;
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    let s = if k % 2 == 0 { sigma } else { sigma * std::f64::consts::PI };
                    let v = xi + s * z;
                    if k % 2 == 0 { v.clamp(0.0, 1.0) } else { v }
                })
                .collect();
            let vy = schedule_value(scenario, &decode(scenario, &y), q);
            if vy > v || (v == f64::NEG_INFINITY && vy == f64::NEG_INFINITY) {
                if vy > v {
                    sigma = (sigma * 1.5).min(0.5);
                }
                v = vy;
                x = y;
            } else {
                sigma = (sigma * 0.97).max(1e-7);
            }
        }
        best = best.max(v);
    }
    best
}
