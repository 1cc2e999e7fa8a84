use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swipt_cran::energymax::{f_e, solve_qmax};
use swipt_cran::model::{check_causality, slot_rate, ChannelState, EnergyProfile, Scenario, SystemParams};
use swipt_cran::offline::{equal_allocation_holds, lifted_residuals, solve_offline};
use swipt_cran::oracle::{concavity_probe, dwt_composition_throughput, grid_search_fr, random_search_qmax, search_offline};
use swipt_cran::slot_solver::{solve_fr, SlotProblem};
use swipt_cran::C64;

fn random_channel(rng: &mut ChaCha8Rng, l: usize) -> Vec<C64> {
    (0..l)
        .map(|_| C64::from_polar(rng.random_range(0.2..1.5), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

fn random_scenario(rng: &mut ChaCha8Rng, l: usize, n: usize) -> Scenario {
    let e: Vec<Vec<f64>> = (0..l)
        .map(|_| (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..2.0) }).collect())
        .collect();
    Scenario::new(
        SystemParams::new(l, n, 1.0, 0.1, 0.8, 1e6).unwrap(),
        ChannelState::new(random_channel(rng, l), random_channel(rng, l)).unwrap(),
        EnergyProfile::new(e).unwrap(),
        None,
    )
    .unwrap()
}

#[test]
fn closed_form_qmax_bounds_random_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10 {
        let l = 1 + k % 3;
        let s = random_scenario(&mut rng, l, 1 + k % 4);
        let exact = solve_qmax(&s.profile, &s.channels.g, &s.params).unwrap().q_max;
        let found = random_search_qmax(&s, 4000, k as u64);
        assert!(found <= exact * (1.0 + 1e-9), "search {found} beat closed form {exact}");
        assert!(found >= exact * 0.995, "search {found} far below {exact}");
    }
}

#[test]
fn slot_solver_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..6 {
        let l = 1 + k % 3;
        let p: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..2.0)).collect();
        let g = random_channel(&mut rng, l);
        let prob = SlotProblem {
            q: rng.random_range(0.0..0.9) * f_e(&p, &g).unwrap(),
            p,
            h: random_channel(&mut rng, l),
            g,
            noise_variance: 0.1,
        };
        let sol = solve_fr(&prob).unwrap();
        let grid = grid_search_fr(&prob, 16);
        assert!((sol.rate - grid).abs() <= 5e-3 * grid.max(1e-12), "solver {} grid {grid}", sol.rate);
        assert!(sol.rate >= grid - 1e-9);
    }
}

#[test]
fn data_only_slot_is_full_power_matched_filter() {
    let h = vec![C64::new(0.3, -0.4), C64::new(-1.0, 0.2), C64::new(0.1, 0.7)];
    let g = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.5, 0.5)];
    let p = vec![0.5, 1.0, 2.0];
    let sol = solve_fr(&SlotProblem { p: p.clone(), q: 0.0, h: h.clone(), g, noise_variance: 0.2 }).unwrap();
    let amp: f64 = h.iter().zip(&p).map(|(x, pl)| x.norm() * pl.sqrt()).sum();
    assert_relative_eq!(sol.rate, (amp * amp / 0.2).ln_1p(), max_relative = 1e-9);
}

#[test]
fn orthogonal_channels_decouple() {
    let h = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let g = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let prob = SlotProblem { p: vec![1.0, 1.0], q: 0.5, h, g, noise_variance: 0.1 };
    let sol = solve_fr(&prob).unwrap();
    assert_relative_eq!(sol.rate, (1.0f64 / 0.1).ln_1p(), max_relative = 1e-9);
    assert!(sol.w[1].norm_sqr() >= 0.5 - 1e-9);
    assert_relative_eq!(grid_search_fr(&prob, 12), sol.rate, max_relative = 1e-3);
}

#[test]
fn offline_matches_brute_force_on_tiny_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..4 {
        let s = random_scenario(&mut rng, 2, 2 + k % 2);
        let q_max = solve_qmax(&s.profile, &s.channels.g, &s.params).unwrap().q_max;
        let q = rng.random_range(0.0..0.8) * q_max;
        let sol = solve_offline(&s, q).unwrap();
        let found = search_offline(&s, q, 6, 3000, k as u64);
        assert!(found <= sol.throughput * (1.0 + 1e-6), "search {found} beat solver {}", sol.throughput);
        assert!(found >= sol.throughput * 0.99, "search {found} far below solver {}", sol.throughput);
        assert!(sol.gap <= 1e-3);
        assert!(lifted_residuals(&s, &sol).max() <= 1e-6);
        assert!(equal_allocation_holds(&sol));
        assert!(check_causality(&sol.schedule, &s.profile).is_causal());
    }
}

#[test]
fn single_bs_data_only_equals_water_filling() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let s = random_scenario(&mut rng, 1, 6);
        let sol = solve_offline(&s, 0.0).unwrap();
        assert_relative_eq!(sol.throughput, dwt_composition_throughput(&s), max_relative = 1e-6);
    }
}

#[test]
fn rate_is_concave_in_power_and_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let ch = ChannelState::new(random_channel(&mut rng, 2), random_channel(&mut rng, 2)).unwrap();
    assert!(concavity_probe(&ch, 0.1, 40, 3) <= 1e-6);
}

#[test]
fn energy_beam_rate_at_full_floor() {
    let h = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.9)];
    let g = vec![C64::new(0.8, -0.3), C64::new(0.1, 0.4)];
    let p = vec![1.0, 0.5];
    let fe = f_e(&p, &g).unwrap();
    let sol = solve_fr(&SlotProblem { p, q: fe, h: h.clone(), g, noise_variance: 0.1 }).unwrap();
    assert_relative_eq!(sol.rate, slot_rate(&sol.w, &h, 0.1), max_relative = 1e-12);
    assert!(sol.dual.is_none());
}
