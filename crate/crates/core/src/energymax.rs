//! Maximum RF energy deliverable to the energy receiver.
//!
//! With per-BS energy budgets the best strategy keeps one beam direction for
//! the whole horizon: each BS transmits with the phase of its energy channel
//! and with a power share equal to its share of the total harvested energy.

use serde::Serialize;

use crate::model::{EnergyProfile, SystemParams};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyMaxSolution {
    /// Unit-norm beam direction shared by every slot.
    pub w0: Vec<C64>,
    /// Maximum RF charged energy in Joules (post-η).
    pub q_max: f64,
    /// Sum transmit energy per slot; slot `n` uses `sqrt(P[n]) * w0`.
    pub power_schedule: Vec<f64>,
}

impl EnergyMaxSolution {
    pub fn beam(&self, slot: usize) -> Vec<C64> {
        let a = self.power_schedule[slot].sqrt();
        self.w0.iter().map(|&x| x * a).collect()
    }

    pub fn beams(&self) -> Vec<Vec<C64>> {
        (0..self.power_schedule.len()).map(|n| self.beam(n)).collect()
    }
}

/// Unit phasor of `z`, or 1 when `z` is zero.
pub(crate) fn phase_of(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        C64::new(1.0, 0.0)
    }
}

/// Energy-optimal direction: |w0_l|² is BS l's share of the total harvest and
/// arg(w0_l) = arg(g_l). All zeros when nothing is harvested.
pub fn energy_direction(totals: &[f64], g: &[C64]) -> Vec<C64> {
    let sum: f64 = totals.iter().sum();
    if sum <= 0.0 {
        return vec![C64::new(0.0, 0.0); g.len()];
    }
    totals
        .iter()
        .zip(g)
        .map(|(&t, &gl)| phase_of(gl) * (t / sum).sqrt())
        .collect()
}

/// Greedy earliest-maximal sum-power schedule for fixed power ratios.
///
/// P_n = min_l (Σ_{t≤n} E_{l,t} / ratio_l) − Σ_{t<n} P_t, clipped at zero.
/// BSs with a zero ratio place no limit.
pub fn greedy_power_schedule(profile: &EnergyProfile, ratios: &[f64]) -> Vec<f64> {
    let cums: Vec<Vec<f64>> = (0..profile.num_bs()).map(|l| profile.cumulative(l)).collect();
    let mut used = 0.0;
    (0..profile.num_slots())
        .map(|n| {
            let cap = ratios
                .iter()
                .zip(&cums)
                .filter(|(&r, _)| r > 0.0)
                .map(|(&r, c)| c[n] / r)
                .fold(f64::INFINITY, f64::min);
            if !cap.is_finite() {
                return 0.0;
            }
            let p = (cap - used).max(0.0);
            used += p;
            p
        })
        .collect()
}

/// Closed-form maximum RF charged energy and an energy-optimal schedule.
pub fn solve_qmax(profile: &EnergyProfile, g: &[C64], params: &SystemParams) -> Result<EnergyMaxSolution> {
    if g.len() != profile.num_bs() {
        return Err(Error::DimensionMismatch {
            what: "energy channel g",
            expected: profile.num_bs(),
            found: g.len(),
        });
    }
    let totals: Vec<f64> = (0..profile.num_bs()).map(|l| profile.total(l)).collect();
    let w0 = energy_direction(&totals, g);
    let amplitude: f64 = g.iter().zip(&totals).map(|(gl, &t)| gl.norm() * t.sqrt()).sum();
    let q_max = params.eta * amplitude * amplitude;
    let ratios: Vec<f64> = w0.iter().map(|x| x.norm_sqr()).collect();
    let mut power_schedule = greedy_power_schedule(profile, &ratios);
    if q_max == 0.0 {
        power_schedule.iter_mut().for_each(|p| *p = 0.0);
    }
    Ok(EnergyMaxSolution {
        w0,
        q_max,
        power_schedule,
    })
}

/// Largest |gᴴw|² over beams with |w_l|² ≤ p_l: (Σ_l |g_l|√p_l)². Pre-η.
pub fn f_e(p: &[f64], g: &[C64]) -> Result<f64> {
    if p.len() != g.len() {
        return Err(Error::DimensionMismatch {
            what: "power vector",
            expected: g.len(),
            found: p.len(),
        });
    }
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter(format!("negative power {bad}")));
    }
    let s: f64 = p.iter().zip(g).map(|(&pl, gl)| gl.norm() * pl.sqrt()).sum();
    Ok(s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(l: usize, n: usize, eta: f64) -> SystemParams {
        SystemParams::new(l, n, 1.0, 1.0, eta, 1.0).unwrap()
    }

    #[test]
    fn single_bs_direction_is_forced() {
        let prof = EnergyProfile::new(vec![vec![2.0, 3.0]]).unwrap();
        let sol = solve_qmax(&prof, &[C64::new(1.0, 0.0)], &params(1, 2, 0.8)).unwrap();
        assert_relative_eq!(sol.q_max, 4.0, epsilon = 1e-12);
        assert_relative_eq!(sol.w0[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.power_schedule.iter().sum::<f64>(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn two_bs_ratio_and_qmax() {
        let prof = EnergyProfile::new(vec![vec![4.0], vec![1.0]]).unwrap();
        let g = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let sol = solve_qmax(&prof, &g, &params(2, 1, 0.5)).unwrap();
        // η = 1 would give 9; η = 0.5 halves it.
        assert_relative_eq!(sol.q_max, 4.5, epsilon = 1e-12);
        assert_relative_eq!(sol.w0[0].norm_sqr(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(sol.w0[1].norm_sqr(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn greedy_schedule_waits_for_bottleneck_bs() {
        let prof = EnergyProfile::new(vec![vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let sol = solve_qmax(&prof, &g, &params(2, 2, 0.5)).unwrap();
        assert_relative_eq!(sol.power_schedule[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sol.power_schedule[1], 5.0, epsilon = 1e-12);
        // Enumerating P_1 on a grid: any positive P_1 overspends BS 2 in slot 1.
        for k in 1..=50 {
            let p1 = 5.0 * k as f64 / 50.0;
            assert!(p1 * sol.w0[1].norm_sqr() > prof.get(1, 0));
        }
    }

    #[test]
    fn phases_follow_energy_channel() {
        let prof = EnergyProfile::new(vec![vec![1.0, 2.0], vec![0.5, 0.5], vec![3.0, 0.0]]).unwrap();
        let g = [C64::new(0.3, -0.4), C64::new(-1.0, 0.2), C64::new(0.0, 2.0)];
        let sol = solve_qmax(&prof, &g, &params(3, 2, 0.8)).unwrap();
        let norm: f64 = sol.w0.iter().map(|x| x.norm_sqr()).sum();
        assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
        for (w, gl) in sol.w0.iter().zip(&g) {
            let z = w * gl.conj();
            assert!(z.re >= 0.0 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_profile_yields_zero() {
        let prof = EnergyProfile::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let g = [C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let sol = solve_qmax(&prof, &g, &params(2, 2, 0.8)).unwrap();
        assert_eq!(sol.q_max, 0.0);
        assert!(sol.power_schedule.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bs_without_energy_is_silent() {
        let prof = EnergyProfile::new(vec![vec![1.0], vec![0.0]]).unwrap();
        let g = [C64::new(1.0, 0.0), C64::new(5.0, 0.0)];
        let sol = solve_qmax(&prof, &g, &params(2, 1, 0.5)).unwrap();
        assert_eq!(sol.w0[1].norm_sqr(), 0.0);
        assert_relative_eq!(sol.q_max, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn f_e_values() {
        let g = [C64::new(1.0, 0.0), C64::new(0.0, 2.0)];
        assert_eq!(f_e(&[0.0, 0.0], &g).unwrap(), 0.0);
        assert_relative_eq!(f_e(&[2.0], &[C64::new(0.0, 1.0)]).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(f_e(&[1.0, 1.0], &g).unwrap(), 9.0, epsilon = 1e-12);
        assert!(f_e(&[-1.0, 1.0], &g).is_err());
    }

    #[test]
    fn f_e_matches_grid_search() {
        // max |g^H w|^2 over |w_l|^2 <= p_l by amplitude/phase grid.
        let g = [C64::new(1.0, 0.0), C64::new(0.0, 2.0)];
        let p = [1.0f64, 1.0];
        let mut best: f64 = 0.0;
        for i in 0..=20 {
            for j in 0..=20 {
                for k in 0..72 {
                    let a1 = p[0].sqrt() * i as f64 / 20.0;
                    let a2 = p[1].sqrt() * j as f64 / 20.0;
                    let th = k as f64 * std::f64::consts::PI / 36.0;
                    let w = [C64::new(a1, 0.0), C64::from_polar(a2, th)];
                    let v: C64 = g.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                    best = best.max(v.norm_sqr());
                }
            }
        }
        assert_relative_eq!(best, 9.0, epsilon = 1e-9);
    }
}
