//! Lagrangian dual of the interval-reduced covariance problem
//!
//! ```text
//! max  Σ_m I_m log(1 + hᴴW_m h/σ²)
//! s.t. Σ_m I_m tr(W_m G) ≥ q,   Σ_{t≤m} I_t [W_t]_ll ≤ C_{l,m},   W_m ⪰ 0
//! ```
//!
//! For fixed multipliers the Lagrangian separates over intervals. Each term is
//! maximized in closed form: with `B = diag(Λ) − μ ggᴴ` (Λ_{l,m} the suffix sums
//! of λ) the maximizer is the rank-one water-filled beam
//! `w = sqrt((1 − σ²/h̃)⁺ / h̃) · B⁻¹h`, `h̃ = hᴴB⁻¹h`. `B⁻¹` is formed through
//! Sherman–Morrison since `G = ggᴴ` is rank one.
//!
//! The dual function is convex and continuously differentiable, so it is
//! minimized by a projected Newton method over the box `λ ≥ 0, μ ≥ 0` with an
//! Armijo search that also keeps `B ≻ 0`. A feasible primal is recovered at
//! every iterate, which gives the duality-gap certificate.
//!
//! Everything here runs in normalized units: energies divided by a scale
//! `e0`, `h` scaled by `sqrt(e0)/σ` (unit noise) and `g` by its norm.

use crate::energymax::phase_of;
use crate::model::{inner, norm_sqr};
use crate::C64;

/// Smallest value allowed for λ_{l,M}, which keeps diag(Λ) invertible.
pub(crate) const LAMBDA_FLOOR: f64 = 1e-12;
/// B ≻ 0 is enforced as μ·gᴴdiag(Λ)⁻¹g ≤ 1 − DOMAIN_MARGIN.
const DOMAIN_MARGIN: f64 = 1e-14;
const ARMIJO: f64 = 1e-4;
/// `B_m` counts as singular once `1 − μ gᴴD⁻¹g` drops below this.
const NULL_MARGIN: f64 = 1e-4;
/// Denominator floor (nats) for the relative duality gap.
pub(crate) const GAP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct DualProblem {
    lengths: Vec<f64>,
    /// Cumulative normalized harvest at the end of each interval, `[m][l]`.
    cum: Vec<Vec<f64>>,
    h: Vec<C64>,
    g: Vec<C64>,
    rf_target: f64,
    energy_scale: f64,
    g_scale: f64,
    /// `var[m][l]` is the position of λ_{l,m} in the variable vector.
    var: Vec<Vec<Option<usize>>>,
    mu_var: Option<usize>,
    lower: Vec<f64>,
    energy_target: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct DualOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Result of a dual solve. Beams are in physical units (√J).
#[derive(Debug, Clone)]
pub(crate) struct DualOutcome {
    pub beams: Vec<Vec<C64>>,
    pub throughput: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Multipliers in physical units: `lambda[m][l]` per Joule, `mu` per
    /// unit of `tr(WG)`.
    pub lambda: Vec<Vec<f64>>,
    pub mu: f64,
    /// Final iterate in normalized coordinates, for warm starts.
    pub point: Vec<f64>,
    pub feasible: bool,
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    hess: Option<Vec<f64>>,
    beams: Vec<Vec<C64>>,
}

/// Best primal and dual values seen during a solve.
struct Track {
    best_primal: Option<(f64, Vec<Vec<C64>>)>,
    best_dual: f64,
    iterations: usize,
}

impl Track {
    fn gap(&self) -> f64 {
        self.best_primal
            .as_ref()
            .map_or(f64::INFINITY, |(t, _)| ((self.best_dual - t) / t.abs().max(GAP_FLOOR)).max(0.0))
    }

    fn offer_primal(&mut self, t: f64, beams: Vec<Vec<C64>>) {
        if self.best_primal.as_ref().is_none_or(|(bt, _)| t > *bt) {
            self.best_primal = Some((t, beams));
        }
    }

    /// Records a dual value and the repaired Lagrangian maximizer at `x`.
    fn offer(&mut self, problem: &DualProblem, value: f64, mut beams: Vec<Vec<C64>>, x: &[f64]) {
        self.best_dual = self.best_dual.min(value);
        if let Some(t) = problem.repair(&mut beams, x) {
            self.offer_primal(t, beams);
        }
    }
}

impl DualProblem {
    /// `harvest[m][l]` is the energy BS `l` harvests during interval `m`
    /// (Joules); `rf_target` is the floor on Σ I_m |gᴴw_m|² (pre-η, J).
    pub fn new(
        lengths: &[usize],
        harvest: &[Vec<f64>],
        h: &[C64],
        g: &[C64],
        noise_variance: f64,
        rf_target: f64,
    ) -> Self {
        let l_count = h.len();
        let slots: usize = lengths.iter().sum();
        let total: f64 = harvest.iter().flatten().sum();
        let active_bs = (0..l_count)
            .filter(|&l| harvest.iter().any(|row| row[l] > 0.0))
            .count()
            .max(1);
        let energy_scale = if total > 0.0 {
            total / (slots.max(1) as f64 * active_bs as f64)
        } else {
            1.0
        };
        let g_scale = norm_sqr(g).max(f64::MIN_POSITIVE);
        let hn: Vec<C64> = h
            .iter()
            .map(|x| x * (energy_scale / noise_variance).sqrt())
            .collect();
        let gn: Vec<C64> = g.iter().map(|x| x / g_scale.sqrt()).collect();

        let mut cum = Vec::with_capacity(harvest.len());
        let mut acc = vec![0.0; l_count];
        for row in harvest {
            for l in 0..l_count {
                acc[l] += row[l] / energy_scale;
            }
            cum.push(acc.clone());
        }

        let m_count = lengths.len();
        let mut var = vec![vec![None; l_count]; m_count];
        let mut lower = Vec::new();
        for m in 0..m_count {
            for l in 0..l_count {
                if cum[m][l] > 0.0 {
                    var[m][l] = Some(lower.len());
                    lower.push(if m + 1 == m_count { LAMBDA_FLOOR } else { 0.0 });
                }
            }
        }
        let rf_norm = rf_target / (g_scale * energy_scale);
        let mu_var = if rf_norm > 0.0 {
            lower.push(0.0);
            Some(lower.len() - 1)
        } else {
            None
        };
        let mut problem = DualProblem {
            lengths: lengths.iter().map(|&x| x as f64).collect(),
            cum,
            h: hn,
            g: gn,
            rf_target: rf_norm.max(0.0),
            energy_scale,
            g_scale,
            var,
            mu_var,
            lower,
            energy_target: Vec::new(),
        };
        problem.energy_target = problem.energy_schedule();
        problem
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    fn num_intervals(&self) -> usize {
        self.lengths.len()
    }

    fn num_bs(&self) -> usize {
        self.h.len()
    }

    fn active(&self, m: usize, l: usize) -> bool {
        self.var[m][l].is_some()
    }

    fn mu_of(&self, x: &[f64]) -> f64 {
        self.mu_var.map_or(0.0, |i| x[i])
    }

    /// Suffix sums Λ_{l,m} = Σ_{t≥m} λ_{l,t}.
    fn suffix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let mut big = vec![vec![0.0; lc]; mc];
        for l in 0..lc {
            let mut acc = 0.0;
            for m in (0..mc).rev() {
                if let Some(i) = self.var[m][l] {
                    acc += x[i];
                }
                big[m][l] = acc;
            }
        }
        big
    }

    /// Dual function value at a normalized point; `None` outside B ≻ 0.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        self.evaluate(x, false).map(|e| e.value)
    }

    fn evaluate(&self, x: &[f64], want_hess: bool) -> Option<Eval> {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let mu = self.mu_of(x);
        let big = self.suffix(x);
        let n_loc = lc + 1;
        let mut value = 0.0;
        let mut beams = Vec::with_capacity(mc);
        // Per-interval gradient wrt (Λ_m, μ) and Hessian blocks.
        let mut g_loc = vec![vec![0.0; n_loc]; mc];
        let mut h_loc = vec![vec![0.0; n_loc * n_loc]; if want_hess { mc } else { 0 }];

        for m in 0..mc {
            let d_inv: Vec<f64> = (0..lc)
                .map(|l| if self.active(m, l) { 1.0 / big[m][l] } else { 0.0 })
                .collect();
            let s_g: f64 = (0..lc).map(|l| self.g[l].norm_sqr() * d_inv[l]).sum();
            if mu * s_g >= 1.0 - DOMAIN_MARGIN * 0.5 {
                return None;
            }
            let kappa = mu / (1.0 - mu * s_g);
            let u: Vec<C64> = (0..lc).map(|l| self.g[l] * d_inv[l]).collect();
            let uh = inner(&u, &self.h);
            let xv: Vec<C64> = (0..lc)
                .map(|l| self.h[l] * d_inv[l] + u[l] * (kappa * uh))
                .collect();
            let h_eff = inner(&self.h, &xv).re;
            let len = self.lengths[m];
            if !(h_eff > 1.0) {
                beams.push(vec![C64::new(0.0, 0.0); lc]);
                continue;
            }
            let phi = h_eff.ln() - 1.0 + 1.0 / h_eff;
            let dphi = (h_eff - 1.0) / (h_eff * h_eff);
            let d2phi = (2.0 - h_eff) / (h_eff * h_eff * h_eff);
            value += len * phi;
            let amp = dphi.sqrt();
            beams.push(xv.iter().map(|v| v * amp).collect());

            let gx = inner(&self.g, &xv);
            let mut dh = vec![0.0; n_loc];
            for l in 0..lc {
                dh[l] = -xv[l].norm_sqr();
            }
            dh[lc] = gx.norm_sqr();
            for k in 0..n_loc {
                g_loc[m][k] = len * dphi * dh[k];
            }
            if want_hess {
                // C = D⁻¹ + κ u uᴴ, y = C g = u (1 + κ s_g)
                let y_scale = 1.0 + kappa * s_g;
                let hm = &mut h_loc[m];
                for l in 0..lc {
                    for k in 0..lc {
                        let mut c_lk = u[l] * u[k].conj() * kappa;
                        if l == k {
                            c_lk += d_inv[l];
                        }
                        let d2 = 2.0 * (xv[l].conj() * c_lk * xv[k]).re;
                        hm[l * n_loc + k] = len * (d2phi * dh[l] * dh[k] + dphi * d2);
                    }
                    let d2 = -2.0 * (xv[l].conj() * u[l] * y_scale * gx).re;
                    let v = len * (d2phi * dh[l] * dh[lc] + dphi * d2);
                    hm[l * n_loc + lc] = v;
                    hm[lc * n_loc + l] = v;
                }
                let d2 = 2.0 * gx.norm_sqr() * s_g * y_scale;
                hm[lc * n_loc + lc] = len * (d2phi * dh[lc] * dh[lc] + dphi * d2);
            }
        }

        // Linear terms and the chain rule from Λ to λ.
        let k_count = self.num_vars();
        let mut grad = vec![0.0; k_count];
        let mut acc = vec![0.0; n_loc];
        for m in 0..mc {
            for k in 0..n_loc {
                acc[k] += g_loc[m][k];
            }
            for l in 0..lc {
                if let Some(i) = self.var[m][l] {
                    value += x[i] * self.cum[m][l];
                    grad[i] = self.cum[m][l] + acc[l];
                }
            }
        }
        if let Some(i) = self.mu_var {
            value -= mu * self.rf_target;
            grad[i] = acc[lc] - self.rf_target;
        }

        let hess = want_hess.then(|| {
            let mut prefix = Vec::with_capacity(mc);
            let mut run = vec![0.0; n_loc * n_loc];
            for block in &h_loc {
                for (r, b) in run.iter_mut().zip(block) {
                    *r += b;
                }
                prefix.push(run.clone());
            }
            let mut hess = vec![0.0; k_count * k_count];
            for t in 0..mc {
                for l in 0..lc {
                    let Some(a) = self.var[t][l] else { continue };
                    for s in 0..mc {
                        for k in 0..lc {
                            let Some(b) = self.var[s][k] else { continue };
                            hess[a * k_count + b] = prefix[t.min(s)][l * n_loc + k];
                        }
                    }
                    if let Some(i) = self.mu_var {
                        let v = prefix[t][l * n_loc + lc];
                        hess[a * k_count + i] = v;
                        hess[i * k_count + a] = v;
                    }
                }
            }
            if let Some(i) = self.mu_var {
                hess[i * k_count + i] = prefix[mc - 1][lc * n_loc + lc];
            }
            hess
        });

        Some(Eval {
            value,
            grad,
            hess,
            beams,
        })
    }

    /// Starting point from per-BS water-filling levels over the intervals.
    fn initial_point(&self) -> Vec<f64> {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let mut x = vec![0.0; self.num_vars()];
        for l in 0..lc {
            let inflow: Vec<f64> = (0..mc)
                .map(|m| self.cum[m][l] - if m == 0 { 0.0 } else { self.cum[m - 1][l] })
                .collect();
            let levels = weighted_levels(&inflow, &self.lengths);
            let hl = self.h[l].norm_sqr();
            let big: Vec<f64> = levels
                .iter()
                .map(|&p| {
                    let denom = p + if hl > 0.0 { 1.0 / hl } else { 0.0 };
                    if denom > 0.0 { (1.0 / denom).max(1e-6) } else { 1.0 }
                })
                .collect();
            for m in 0..mc {
                if let Some(i) = self.var[m][l] {
                    let next = if m + 1 < mc { big[m + 1] } else { 0.0 };
                    x[i] = (big[m] - next).max(self.lower[i]);
                }
            }
        }
        x
    }

    fn project(&self, x: &mut [f64]) {
        for (v, lo) in x.iter_mut().zip(&self.lower) {
            if *v < *lo {
                *v = *lo;
            }
        }
    }

    /// Interval-constant energy-maximizing schedule: the fixed energy
    /// direction with sum power water-filled under the tightest BS budget.
    fn energy_schedule(&self) -> Vec<Vec<C64>> {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let totals = &self.cum[mc - 1];
        let sum: f64 = totals.iter().sum();
        if sum <= 0.0 {
            return vec![vec![C64::new(0.0, 0.0); lc]; mc];
        }
        let ratios: Vec<f64> = totals.iter().map(|t| t / sum).collect();
        let budget: Vec<f64> = (0..mc)
            .map(|m| {
                (0..lc)
                    .filter(|&l| ratios[l] > 0.0)
                    .map(|l| self.cum[m][l] / ratios[l])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let inflow: Vec<f64> = (0..mc)
            .map(|m| (budget[m] - if m == 0 { 0.0 } else { budget[m - 1] }).max(0.0))
            .collect();
        let power = weighted_levels(&inflow, &self.lengths);
        power
            .iter()
            .map(|&p| {
                (0..lc)
                    .map(|l| phase_of(self.g[l]) * (p * ratios[l] * (1.0 - 1e-12)).sqrt())
                    .collect()
            })
            .collect()
    }

    fn rf_of(&self, beams: &[Vec<C64>]) -> f64 {
        beams
            .iter()
            .zip(&self.lengths)
            .map(|(w, len)| len * inner(&self.g, w).norm_sqr())
            .sum()
    }

    fn rate_of(&self, beams: &[Vec<C64>]) -> f64 {
        beams
            .iter()
            .zip(&self.lengths)
            .map(|(w, len)| len * inner(&self.h, w).norm_sqr().ln_1p())
            .sum()
    }

    /// Smallest convex combination `(1−t)·beams + t·target` meeting the RF
    /// floor, with each target beam rotated onto the phase of `gᴴw_m`.
    fn mix_toward(&self, beams: &[Vec<C64>], target: &[Vec<C64>]) -> Option<Vec<Vec<C64>>> {
        let target: Vec<Vec<C64>> = beams
            .iter()
            .zip(target)
            .map(|(w, e)| {
                let rot = phase_of(inner(&self.g, w)) * phase_of(inner(&self.g, e)).conj();
                e.iter().map(|x| x * rot).collect()
            })
            .collect();
        if self.rf_of(&target) < self.rf_target {
            return None;
        }
        let mix = |t: f64| -> Vec<Vec<C64>> {
            beams
                .iter()
                .zip(&target)
                .map(|(w, e)| w.iter().zip(e).map(|(a, b)| a * (1.0 - t) + b * t).collect())
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.rf_of(&mix(mid)) >= self.rf_target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(mix(hi))
    }

    /// Restores every cumulative energy constraint at the interval ends by
    /// trimming, for each BS, the interval where its budget first runs out.
    fn scale_causal(&self, beams: &mut [Vec<C64>]) {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        for l in 0..lc {
            let mut spent = 0.0;
            for m in 0..mc {
                if !self.active(m, l) {
                    beams[m][l] = C64::new(0.0, 0.0);
                    continue;
                }
                let len = self.lengths[m];
                let p = beams[m][l].norm_sqr();
                let room = (self.cum[m][l] * (1.0 - 1e-12) - spent).max(0.0);
                if len * p > room {
                    beams[m][l] *= (room / (len * p)).sqrt();
                }
                spent += len * beams[m][l].norm_sqr();
            }
        }
    }

    /// Causal scaling followed, if the RF floor is still missed, by the better
    /// of two mixes toward energy-oriented schedules.
    fn finish(&self, mut beams: Vec<Vec<C64>>) -> Option<(f64, Vec<Vec<C64>>)> {
        self.scale_causal(&mut beams);
        if self.rf_of(&beams) >= self.rf_target {
            return Some((self.rate_of(&beams), beams));
        }
        // Same per-BS powers, phases aligned to g.
        let aligned: Vec<Vec<C64>> = beams
            .iter()
            .map(|w| w.iter().zip(&self.g).map(|(wl, gl)| phase_of(*gl) * wl.norm()).collect())
            .collect();
        [self.mix_toward(&beams, &aligned), self.mix_toward(&beams, &self.energy_target)]
            .into_iter()
            .flatten()
            .map(|b| (self.rate_of(&b), b))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Intervals whose `B_m` is numerically singular, with the unit null
    /// direction `D⁻¹g` of each.
    fn null_directions(&self, x: &[f64]) -> Vec<(usize, Vec<C64>)> {
        let big = self.suffix(x);
        let mu = self.mu_of(x);
        if mu <= 0.0 {
            return Vec::new();
        }
        (0..self.num_intervals())
            .filter_map(|m| {
                let u: Vec<C64> = (0..self.num_bs())
                    .map(|l| if self.active(m, l) { self.g[l] / big[m][l] } else { C64::new(0.0, 0.0) })
                    .collect();
                let s_g = inner(&self.g, &u).re;
                let n = norm_sqr(&u).sqrt();
                (1.0 - mu * s_g < NULL_MARGIN && n > 0.0).then(|| (m, u.iter().map(|v| v / n).collect()))
            })
            .collect()
    }

    /// Makes interval-constant beams feasible and returns their throughput,
    /// or `None` when the RF floor cannot be met.
    ///
    /// When some `B_m` is singular the Lagrangian maximizer is only fixed up
    /// to a multiple of the null direction, which carries energy but no data.
    /// That multiple is searched directly; the result competes with plain
    /// scaling-and-mixing.
    fn repair(&self, beams: &mut Vec<Vec<C64>>, x: &[f64]) -> Option<f64> {
        let mut best = self.finish(beams.clone());
        let null = self.null_directions(x);
        if !null.is_empty() {
            let aligned: Vec<(usize, Vec<C64>)> = null
                .into_iter()
                .map(|(m, u)| {
                    let rot = phase_of(inner(&self.g, &beams[m])) * phase_of(inner(&self.g, &u)).conj();
                    (m, u.iter().map(|v| v * rot).collect())
                })
                .collect();
            let lo = -aligned
                .iter()
                .map(|(m, u)| inner(u, &beams[*m]).norm())
                .fold(0.0, f64::max);
            let budget: f64 = self.cum[self.num_intervals() - 1].iter().sum();
            let hi = (budget / self.lengths.iter().cloned().fold(f64::INFINITY, f64::min)).sqrt();
            let eval = |t: f64| -> Option<(f64, Vec<Vec<C64>>)> {
                let mut b = beams.clone();
                for (m, u) in &aligned {
                    for (w, v) in b[*m].iter_mut().zip(u) {
                        *w += v * t;
                    }
                }
                self.scale_causal(&mut b);
                (self.rf_of(&b) >= self.rf_target).then(|| (self.rate_of(&b), b))
            };
            let score = |t: f64| eval(t).map_or(f64::NEG_INFINITY, |r| r.0);
            let grid = 64;
            let step = (hi - lo) / grid as f64;
            let (mut t_best, mut v_best) = (lo, score(lo));
            for k in 1..=grid {
                let t = lo + step * k as f64;
                let v = score(t);
                if v > v_best {
                    t_best = t;
                    v_best = v;
                }
            }
            if v_best.is_finite() {
                // Golden-section refinement around the best grid point.
                let (mut a, mut b) = ((t_best - step).max(lo), (t_best + step).min(hi));
                let r = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..60 {
                    let c = b - r * (b - a);
                    let d = a + r * (b - a);
                    if score(c) >= score(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                let mid = 0.5 * (a + b);
                let pick = if score(mid) >= v_best { mid } else { t_best };
                if let Some(cand) = eval(pick) {
                    if best.as_ref().is_none_or(|b| cand.0 > b.0) {
                        best = Some(cand);
                    }
                }
            }
        }
        let (t, b) = best?;
        *beams = b;
        Some(t)
    }

    /// Augmented-Lagrangian objective (to minimize) over interval beams and
    /// its gradient `2∂/∂w*`. Returns the shifted multipliers as well.
    fn al_eval(&self, w: &[Vec<C64>], y: &[f64], rho: f64) -> (f64, Vec<Vec<C64>>, Vec<f64>) {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let mut f = 0.0;
        let mut grad = vec![vec![C64::new(0.0, 0.0); lc]; mc];
        for m in 0..mc {
            let len = self.lengths[m];
            let hw = inner(&self.h, &w[m]);
            let s = hw.norm_sqr();
            f -= len * s.ln_1p();
            let c = hw * (2.0 * len / (1.0 + s));
            for l in 0..lc {
                grad[m][l] -= self.h[l] * c;
            }
        }
        let mut shifted = vec![0.0; y.len()];
        let mut penalty = |i: usize, c: f64| -> f64 {
            let t = (y[i] - rho * c).max(0.0);
            shifted[i] = t;
            (t * t - y[i] * y[i]) / (2.0 * rho)
        };
        // Causality: cum − Σ_{t≤m} len_t |w_tl|² ≥ 0. Its weight on |w_tl|²
        // is the suffix sum of the shifted multipliers.
        let mut weights = vec![vec![0.0; lc]; mc];
        for l in 0..lc {
            let mut spent = 0.0;
            for m in 0..mc {
                spent += self.lengths[m] * w[m][l].norm_sqr();
                if let Some(i) = self.var[m][l] {
                    f += penalty(i, self.cum[m][l] - spent);
                }
            }
        }
        if let Some(i) = self.mu_var {
            f += penalty(i, self.rf_of(w) - self.rf_target);
        }
        for l in 0..lc {
            let mut acc = 0.0;
            for m in (0..mc).rev() {
                if let Some(i) = self.var[m][l] {
                    acc += shifted[i];
                }
                weights[m][l] = acc;
            }
        }
        let mu = self.mu_var.map_or(0.0, |i| shifted[i]);
        for m in 0..mc {
            let len = self.lengths[m];
            let gw = inner(&self.g, &w[m]);
            for l in 0..lc {
                if self.active(m, l) {
                    grad[m][l] += w[m][l] * (2.0 * len * weights[m][l]) - self.g[l] * gw * (2.0 * len * mu);
                } else {
                    grad[m][l] = C64::new(0.0, 0.0);
                }
            }
        }
        (f, grad, shifted)
    }

    /// Minimizes the augmented Lagrangian in `w` by limited-memory BFGS.
    fn al_inner(&self, w: &mut [Vec<C64>], y: &[f64], rho: f64, iters: usize) {
        const MEMORY: usize = 8;
        let flat = |b: &[Vec<C64>]| -> Vec<f64> { b.iter().flatten().flat_map(|c| [c.re, c.im]).collect() };
        let lc = self.num_bs();
        let unflat = |v: &[f64], b: &mut [Vec<C64>]| {
            for (k, c) in v.chunks(2).enumerate() {
                b[k / lc][k % lc] = C64::new(c[0], c[1]);
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = flat(w);
        let (mut f, g, _) = self.al_eval(w, y, rho);
        let mut g = flat(&g);
        let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
        let mut trial = w.to_vec();
        for _ in 0..iters {
            // Two-loop recursion.
            let mut q = g.clone();
            let mut alphas = Vec::with_capacity(hist.len());
            for (s, yv, r) in hist.iter().rev() {
                let a = r * dot(s, &q);
                q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
                alphas.push(a);
            }
            if let Some((s, yv, _)) = hist.back() {
                let gamma = dot(s, yv) / dot(yv, yv);
                q.iter_mut().for_each(|v| *v *= gamma);
            } else {
                let gn = dot(&g, &g).sqrt().max(1e-300);
                q.iter_mut().for_each(|v| *v /= gn);
            }
            for ((s, yv, r), a) in hist.iter().zip(alphas.iter().rev()) {
                let b = r * dot(yv, &q);
                q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
            }
            let mut slope = -dot(&g, &q);
            if slope >= 0.0 {
                hist.clear();
                q = g.clone();
                slope = -dot(&g, &g);
            }
            if slope > -1e-300 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let xn: Vec<f64> = x.iter().zip(&q).map(|(a, d)| a - step * d).collect();
                unflat(&xn, &mut trial);
                let (fn_, gn, _) = self.al_eval(&trial, y, rho);
                if fn_ <= f + ARMIJO * step * slope {
                    accepted = Some((xn, fn_, flat(&gn)));
                    break;
                }
                step *= 0.5;
            }
            let Some((xn, fn_, gn)) = accepted else { break };
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
                if hist.len() == MEMORY {
                    hist.pop_front();
                }
                hist.push_back((s, yv, 1.0 / sy));
            }
            let done = (f - fn_).abs() <= 1e-15 * f.abs().max(1.0);
            x = xn;
            f = fn_;
            g = gn;
            if done {
                break;
            }
        }
        unflat(&x, w);
    }

    /// Smallest dual value over points pulled from `y` into the domain by
    /// shrinking μ. Multipliers of a degenerate optimum sit on the domain
    /// boundary, where the value itself is undefined.
    fn bound_near(&self, y: &[f64]) -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, Vec<f64>)> = self.value(y).map(|v| (v, y.to_vec()));
        let Some(i) = self.mu_var else { return best };
        let mut p = y.to_vec();
        for k in 2..=24 {
            p[i] = y[i] * (1.0 - 0.5f64.powi(k));
            if let Some(v) = self.value(&p) {
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, p.clone()));
                }
            }
        }
        best
    }

    /// Primal polish by the method of multipliers from one start. Each round
    /// yields a repaired primal candidate and, from its multipliers, possibly
    /// a fresh upper bound.
    fn polish(&self, start: &[Vec<C64>], x: &[f64], track: &mut Track, tol: f64) -> Option<Vec<f64>> {
        let mut w = start.to_vec();
        let mut y = x.to_vec();
        let mut rho = 10.0;
        let mut prev_viol = f64::INFINITY;
        for _ in 0..30 {
            self.al_inner(&mut w, &y, rho, 400);
            let (_, _, shifted) = self.al_eval(&w, &y, rho);
            let viol = y
                .iter()
                .zip(&shifted)
                .map(|(a, b)| ((a - b) / rho).abs())
                .fold(0.0, f64::max);
            y = shifted;
            for (v, lo) in y.iter_mut().zip(&self.lower) {
                *v = v.max(*lo);
            }
            if let Some((t, b)) = self.finish(w.clone()) {
                track.offer_primal(t, b);
            }
            if let Some((v, _)) = self.bound_near(&y) {
                track.best_dual = track.best_dual.min(v);
            }
            if track.gap() <= tol || viol < 1e-12 {
                break;
            }
            if viol > 0.25 * prev_viol && rho < 1e8 {
                rho *= 10.0;
            }
            prev_viol = viol;
        }
        self.bound_near(&y).map(|(_, p)| p)
    }

    /// Starting schedules for the polish besides the best repaired primal:
    /// every active BS at its full per-interval budget, phased toward h and
    /// toward g.
    fn polish_starts(&self) -> Vec<Vec<Vec<C64>>> {
        let (mc, lc) = (self.num_intervals(), self.num_bs());
        let total: f64 = self.lengths.iter().sum();
        [&self.h, &self.g]
            .into_iter()
            .map(|dir| {
                (0..mc)
                    .map(|m| {
                        (0..lc)
                            .map(|l| {
                                if !self.active(m, l) {
                                    return C64::new(0.0, 0.0);
                                }
                                let amp = (self.cum[mc - 1][l] / total).sqrt();
                                phase_of(dir[l]) * amp
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn solve(&self, start: Option<&[f64]>, opts: &DualOptions) -> DualOutcome {
        let k_count = self.num_vars();
        let mut x = match start {
            Some(s) if s.len() == k_count => s.to_vec(),
            _ => self.initial_point(),
        };
        self.project(&mut x);
        if self.evaluate(&x, false).is_none() {
            // Warm start left the domain; fall back, then lift μ from zero.
            x = self.initial_point();
        }

        let mut track = Track {
            best_primal: None,
            best_dual: f64::INFINITY,
            iterations: 0,
        };
        let mut current = self.newton(&mut x, opts, &mut track);
        if track.gap() > opts.tol {
            // Degenerate optima sit on the boundary of B ≻ 0, where Newton
            // stalls and the Lagrangian maximizer is not unique. Polish the
            // primal directly and restart Newton from its multipliers.
            let mut starts = vec![track
                .best_primal
                .as_ref()
                .map_or_else(|| current.beams.clone(), |(_, b)| b.clone())];
            starts.extend(self.polish_starts());
            for start in starts {
                if let Some(mut y) = self.polish(&start, &x, &mut track, opts.tol) {
                    if track.gap() > opts.tol {
                        let rest = DualOptions {
                            tol: opts.tol,
                            max_iter: track.iterations + opts.max_iter / 2,
                        };
                        let c = self.newton(&mut y, &rest, &mut track);
                        x = y;
                        current = c;
                    }
                }
                if track.gap() <= opts.tol {
                    break;
                }
            }
        }

        let gap = track.gap();
        let feasible = track.best_primal.is_some();
        let (throughput, beams_norm) = track.best_primal.unwrap_or_else(|| {
            let mut b = current.beams.clone();
            let t = self.repair(&mut b, &x).unwrap_or(0.0);
            (t, b)
        });
        let e_sqrt = self.energy_scale.sqrt();
        let beams = beams_norm
            .iter()
            .map(|w| w.iter().map(|v| v * e_sqrt).collect())
            .collect();
        let lambda = self
            .var
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| v.map_or(0.0, |i| x[i] / self.energy_scale))
                    .collect()
            })
            .collect();
        DualOutcome {
            beams,
            throughput,
            dual_value: track.best_dual,
            gap,
            iterations: track.iterations,
            lambda,
            mu: self.mu_of(&x) / (self.g_scale * self.energy_scale),
            point: x,
            feasible,
        }
    }

    /// Projected Newton on the dual from `x` (inside the domain) until the
    /// gap target, the iteration budget, or a stall.
    fn newton(&self, x: &mut Vec<f64>, opts: &DualOptions, track: &mut Track) -> Eval {
        let k_count = self.num_vars();
        let mut tau = 1e-12;
        let mut current = self.evaluate(x, true).expect("start point inside the domain");
        loop {
            track.offer(self, current.value, current.beams.clone(), x);
            if track.gap() <= opts.tol || track.iterations >= opts.max_iter {
                break;
            }
            track.iterations += 1;

            let grad = &current.grad;
            let hess = current.hess.as_ref().expect("hessian requested");
            // Bertsekas' projected Newton: variables pinned at their bound
            // with a positive gradient take a scaled gradient step.
            let proj_step: f64 = x
                .iter()
                .zip(grad)
                .zip(&self.lower)
                .map(|((xi, gi), lo)| (xi - (xi - gi).max(*lo)).powi(2))
                .sum::<f64>()
                .sqrt();
            let eps = proj_step.min(1e-3);
            let pinned: Vec<bool> = (0..k_count)
                .map(|i| x[i] <= self.lower[i] + eps && grad[i] > 0.0)
                .collect();
            let free: Vec<usize> = (0..k_count).filter(|&i| !pinned[i]).collect();
            let mut dir = vec![0.0; k_count];
            for i in 0..k_count {
                if pinned[i] {
                    dir[i] = -grad[i] / hess[i * k_count + i].max(1e-12);
                }
            }
            if !free.is_empty() {
                let nf = free.len();
                let max_diag = free
                    .iter()
                    .map(|&i| hess[i * k_count + i].abs())
                    .fold(0.0, f64::max)
                    .max(1e-300);
                loop {
                    let mut a = vec![0.0; nf * nf];
                    for (r, &i) in free.iter().enumerate() {
                        for (c, &j) in free.iter().enumerate() {
                            a[r * nf + c] = hess[i * k_count + j];
                        }
                        a[r * nf + r] += tau * max_diag;
                    }
                    let b: Vec<f64> = free.iter().map(|&i| -grad[i]).collect();
                    if let Some(d) = cholesky_solve(&mut a, &b, nf) {
                        for (r, &i) in free.iter().enumerate() {
                            dir[i] = d[r];
                        }
                        tau = (tau * 0.1).max(1e-14);
                        break;
                    }
                    tau *= 100.0;
                    if tau > 1e6 {
                        for &i in &free {
                            dir[i] = -grad[i] / max_diag;
                        }
                        break;
                    }
                }
            }

            let Some(next) = self.line_search(x, &current, &dir) else {
                // Newton direction failed; try a plain projected gradient.
                let max_diag = (0..k_count)
                    .map(|i| hess[i * k_count + i].abs())
                    .fold(0.0, f64::max)
                    .max(1e-12);
                let sd: Vec<f64> = grad.iter().map(|g| -g / max_diag).collect();
                match self.line_search(x, &current, &sd) {
                    Some(n) => {
                        tau = (tau * 100.0).min(1.0);
                        *x = n;
                        current = self.evaluate(x, true).expect("accepted point is feasible");
                        continue;
                    }
                    None => break,
                }
            };
            let stalled = (current.value - self.value(&next).unwrap_or(current.value)).abs()
                <= 1e-15 * current.value.abs().max(1.0);
            *x = next;
            current = self.evaluate(x, true).expect("accepted point is feasible");
            if stalled {
                track.offer(self, current.value, current.beams.clone(), x);
                break;
            }
        }
        current
    }
    fn line_search(&self, x: &[f64], current: &Eval, dir: &[f64]) -> Option<Vec<f64>> {
        let mut alpha = 1.0;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
            self.project(&mut trial);
            if let Some(v) = self.value(&trial) {
                let decrease: f64 = current
                    .grad
                    .iter()
                    .zip(trial.iter().zip(x))
                    .map(|(g, (t, a))| g * (t - a))
                    .sum();
                if decrease < 0.0 && v <= current.value + ARMIJO * decrease {
                    return Some(trial);
                }
                if decrease >= 0.0 {
                    return None;
                }
            }
            alpha *= 0.5;
        }
        None
    }
}

/// Water-filling levels over intervals of unequal length: repeatedly take
/// the prefix with the smallest average inflow per slot.
fn weighted_levels(inflow: &[f64], lengths: &[f64]) -> Vec<f64> {
    let n = inflow.len();
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let (mut e, mut len) = (0.0, 0.0);
        let mut best = (start + 1, f64::INFINITY);
        for end in start + 1..=n {
            e += inflow[end - 1];
            len += lengths[end - 1];
            let avg = e / len;
            if avg <= best.1 {
                best = (end, avg);
            }
        }
        for v in &mut out[start..best.0] {
            *v = best.1;
        }
        start = best.0;
    }
    out
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, n×n),
/// overwriting `A` with its Cholesky factor. `None` if `A` is not PD.
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[i * n + k] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[k * n + i] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn problem(rf: f64) -> DualProblem {
        DualProblem::new(
            &[1, 2, 1],
            &[vec![1.0, 0.2], vec![0.5, 1.5], vec![2.0, 0.1]],
            &[c(1.0, 0.5), c(-0.3, 0.8)],
            &[c(0.7, -0.2), c(0.4, 0.9)],
            0.05,
            rf,
        )
    }

    #[test]
    fn sherman_morrison_inverse_matches_direct_inverse() {
        // 2x2 B = diag(d) - mu g g^H inverted explicitly.
        let d = [1.3, 0.7];
        let g = [c(0.4, 0.2), c(-0.3, 0.5)];
        let mu = 0.9;
        let b = [
            [c(d[0], 0.0) - g[0] * g[0].conj() * mu, -(g[0] * g[1].conj()) * mu],
            [-(g[1] * g[0].conj()) * mu, c(d[1], 0.0) - g[1] * g[1].conj() * mu],
        ];
        let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        let inv = [[b[1][1] / det, -b[0][1] / det], [-b[1][0] / det, b[0][0] / det]];
        let s_g: f64 = (0..2).map(|l| g[l].norm_sqr() / d[l]).sum();
        let kappa = mu / (1.0 - mu * s_g);
        for l in 0..2 {
            for k in 0..2 {
                let mut v = (g[l] / d[l]) * (g[k] / d[k]).conj() * kappa;
                if l == k {
                    v += 1.0 / d[l];
                }
                assert_relative_eq!(v.re, inv[l][k].re, epsilon = 1e-12);
                assert_relative_eq!(v.im, inv[l][k].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let p = problem(0.8);
        let x0 = {
            let mut x = p.initial_point();
            let i = p.mu_var.unwrap();
            x[i] = 0.05;
            x
        };
        let e = p.evaluate(&x0, true).unwrap();
        let hess = e.hess.unwrap();
        let k = p.num_vars();
        for i in 0..k {
            let step = 1e-6 * x0[i].abs().max(1e-3);
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[i] += step;
            xm[i] -= step;
            let ep = p.evaluate(&xp, true).unwrap();
            let em = p.evaluate(&xm, true).unwrap();
            let fd = (ep.value - em.value) / (2.0 * step);
            assert_relative_eq!(e.grad[i], fd, epsilon = 1e-6, max_relative = 1e-5);
            for j in 0..k {
                let fdh = (ep.grad[j] - em.grad[j]) / (2.0 * step);
                assert_relative_eq!(hess[j * k + i], fdh, epsilon = 1e-5, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn weak_duality_holds_at_arbitrary_points() {
        let p = problem(0.5);
        let out = p.solve(None, &DualOptions { tol: 1e-10, max_iter: 200 });
        assert!(out.feasible);
        assert!(out.gap < 1e-8, "gap {}", out.gap);
        let mut x = p.initial_point();
        for scale in [0.5, 1.0, 3.0] {
            for v in x.iter_mut() {
                *v *= scale;
            }
            if let Some(val) = p.value(&x) {
                assert!(val >= out.throughput - 1e-9);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let orig = a.clone();
        let b = [1.0, -2.0, 0.5];
        let x = cholesky_solve(&mut a, &b, 3).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| orig[i * 3 + j] * x[j]).sum();
            assert_relative_eq!(r, b[i], epsilon = 1e-12);
        }
        let mut neg = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_solve(&mut neg, &[1.0, 1.0], 2).is_none());
    }
}
