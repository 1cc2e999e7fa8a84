//! Single-slot rate maximization under per-BS power caps and an RF floor.
//!
//! `f_R(p, q) = max log(1 + |hᴴw|²/σ²)` s.t. `|w_l|² ≤ p_l`, `|gᴴw|² ≥ q`.
//! Solved through the same Lagrangian machinery as the offline problem with
//! a single interval of length one.

use serde::Serialize;

use crate::energymax::{f_e, phase_of};
use crate::lagrangian::{DualOptions, DualProblem};
use crate::model::{inner, slot_rate};
use crate::{Error, Result, C64};

/// Relative tolerance on `q ≤ f_E(p)`.
const FEASIBILITY_TOL: f64 = 1e-9;
/// Gap the certificate aims for. With three or more BSs the rank-one problem
/// can sit strictly below its relaxation, in which case the reported gap
/// stays above this value even at the optimum.
pub const TARGET_GAP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SlotProblem {
    /// Per-BS power caps (J per slot).
    pub p: Vec<f64>,
    /// RF floor on |gᴴw|² (pre-η).
    pub q: f64,
    pub h: Vec<C64>,
    pub g: Vec<C64>,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotDual {
    pub lambda: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotSolution {
    pub w: Vec<C64>,
    pub rate: f64,
    /// Optimal multipliers; `None` when the feasible set collapses to the
    /// energy-maximizing beam (q = f_E(p)) and no finite multiplier exists.
    pub dual: Option<SlotDual>,
    pub gap: f64,
}

impl SlotProblem {
    fn validate(&self) -> Result<f64> {
        let l = self.p.len();
        for (what, n) in [("channel h", self.h.len()), ("channel g", self.g.len())] {
            if n != l {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: l,
                    found: n,
                });
            }
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::InvalidParameter("noise_variance must be positive".into()));
        }
        if !self.q.is_finite() {
            return Err(Error::InvalidParameter("RF floor must be finite".into()));
        }
        f_e(&self.p, &self.g)
    }
}

/// Solves the single-slot problem. The returned `gap` is certified: the
/// optimum lies within `gap` (relative) of `rate`. Fails with
/// [`Error::Convergence`] only if no feasible beam was found.
pub fn solve_fr(prob: &SlotProblem) -> Result<SlotSolution> {
    let fe = prob.validate()?;
    let q = prob.q.max(0.0);
    if q > fe * (1.0 + FEASIBILITY_TOL) {
        return Err(Error::Infeasible {
            requested: q,
            achievable: fe,
        });
    }
    let lc = prob.p.len();
    if fe == 0.0 && prob.p.iter().all(|&x| x == 0.0) {
        return Ok(SlotSolution {
            w: vec![C64::new(0.0, 0.0); lc],
            rate: 0.0,
            dual: Some(SlotDual {
                lambda: vec![0.0; lc],
                mu: 0.0,
            }),
            gap: 0.0,
        });
    }
    if q > 0.0 && q >= fe * (1.0 - FEASIBILITY_TOL) {
        let w = energy_beam(prob);
        return Ok(SlotSolution {
            rate: slot_rate(&w, &prob.h, prob.noise_variance),
            w,
            dual: None,
            gap: 0.0,
        });
    }

    if prob.h.iter().any(|x| x.norm_sqr() == 0.0) {
        return solve_split(prob, q);
    }

    let dual = DualProblem::new(
        &[1],
        &[prob.p.clone()],
        &prob.h,
        &prob.g,
        prob.noise_variance,
        q,
    );
    let mut out = dual.solve(None, &DualOptions { tol: 1e-10, max_iter: 300 });
    if out.feasible && out.gap > TARGET_GAP {
        // Near a degenerate optimum the log-form dual only approaches its
        // infimum along the domain boundary; the power-form bound does not.
        let w = &out.beams[0];
        let rate = slot_rate(w, &prob.h, prob.noise_variance);
        let scale = 1.0 + rate.exp_m1();
        let lambda: Vec<f64> = out.lambda[0].iter().map(|x| x * scale).collect();
        let mut bound = power_form_bound(prob, q, &lambda, out.mu * scale);
        if let Some((lambda, mu)) = kkt_multipliers(prob, w) {
            let b2 = power_form_bound(prob, q, &lambda, mu);
            bound = bound.min(b2);
        }
        out.gap = out.gap.min(((bound - rate) / rate.max(1e-12)).max(0.0));
    }
    if !out.feasible {
        return Err(Error::Convergence {
            gap: out.gap,
            iterations: out.iterations,
            best: None,
        });
    }
    let w = out.beams.into_iter().next().expect("one interval");
    Ok(SlotSolution {
        rate: slot_rate(&w, &prob.h, prob.noise_variance),
        w,
        dual: Some(SlotDual {
            lambda: out.lambda.into_iter().next().expect("one interval"),
            mu: out.mu,
        }),
        gap: out.gap,
    })
}

/// Upper bound on the optimal rate from multipliers of the log form, via the
/// dual of `max |hᴴw|²/σ²` under the same constraints. With `w_l = √p_l v_l`
/// and `M(c) = c(diag(λ_l p_l) − μ P½ggᴴP½) − P½hhᴴP½/σ²`, any `c > 0`
/// gives `|hᴴw|²/σ² ≤ c(λ·p − μq) + L'·max(0, −eig_min M(c))`. The
/// multipliers are already in power form, so `c` is searched around one.
fn power_form_bound(prob: &SlotProblem, q: f64, lambda: &[f64], mu: f64) -> f64 {
    let idx: Vec<usize> = (0..prob.p.len()).filter(|&l| prob.p[l] > 0.0).collect();
    let n = idx.len();
    let sp: Vec<f64> = idx.iter().map(|&l| prob.p[l].sqrt()).collect();
    let linear = idx.iter().map(|&l| lambda[l] * prob.p[l]).sum::<f64>() - mu * q;
    let matrix = |c: f64| -> Vec<C64> {
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        for (r, &a) in idx.iter().enumerate() {
            for (k, &b) in idx.iter().enumerate() {
                let ga = prob.g[a] * sp[r];
                let gb = prob.g[b] * sp[k];
                let ha = prob.h[a] * sp[r];
                let hb = prob.h[b] * sp[k];
                let mut v = -(ga * gb.conj()) * (c * mu) - ha * hb.conj() / prob.noise_variance;
                if r == k {
                    v += c * lambda[a] * prob.p[a];
                }
                m[r * n + k] = v;
            }
        }
        m
    };
    let value = |c: f64| -> f64 {
        let m = matrix(c);
        let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        // Smallest shift making M positive definite, by bisection.
        let shifted_pd = |d: f64| {
            let mut a = m.clone();
            for i in 0..n {
                a[i * n + i] += d;
            }
            hermitian_pd(&mut a, n)
        };
        let shift = if shifted_pd(0.0) {
            0.0
        } else {
            let (mut lo, mut hi) = (0.0, scale * n as f64 + 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if shifted_pd(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        c * linear + n as f64 * shift
    };
    // The bound is convex in c.
    let (mut a, mut b) = (0.25, 4.0);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c1 = b - r * (b - a);
        let c2 = a + r * (b - a);
        if value(c1) <= value(c2) {
            b = c2;
        } else {
            a = c1;
        }
    }
    value(0.5 * (a + b)).ln_1p()
}

/// Power-form multipliers fitted to the stationarity condition
/// `λ_l w_l = μ g_l (gᴴw) + h_l (hᴴw)/σ²` in the least-squares sense.
fn kkt_multipliers(prob: &SlotProblem, w: &[C64]) -> Option<(Vec<f64>, f64)> {
    let lc = prob.p.len();
    let gw = inner(&prob.g, w);
    let hw = inner(&prob.h, w) / prob.noise_variance;
    // Unknowns (λ_1..λ_L, μ); two real rows per BS.
    let k = lc + 1;
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    for l in 0..lc {
        let rhs = prob.h[l] * hw;
        let coef_mu = -(prob.g[l] * gw);
        for (a_l, a_mu, b) in [(w[l].re, coef_mu.re, rhs.re), (w[l].im, coef_mu.im, rhs.im)] {
            let row = |j: usize| if j == l { a_l } else if j == lc { a_mu } else { 0.0 };
            for i in 0..k {
                atb[i] += row(i) * b;
                for j in 0..k {
                    ata[i * k + j] += row(i) * row(j);
                }
            }
        }
    }
    let x = solve_dense(&mut ata, &mut atb, k)?;
    Some((x[..lc].iter().map(|v| v.max(0.0)).collect(), x[lc].max(0.0)))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))?;
        if a[piv * n + c].abs() < 1e-300 {
            return None;
        }
        for j in 0..n {
            a.swap(c * n + j, piv * n + j);
        }
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r * n + c] / a[c * n + c];
            for j in c..n {
                a[r * n + j] -= f * a[c * n + j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r * n + j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

/// Cholesky test for a Hermitian matrix stored row-major.
fn hermitian_pd(a: &mut [C64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = v / d;
        }
    }
    true
}

/// BSs the data receiver cannot hear only help the RF floor, so they run at
/// full power phase-aligned with the rest of the beam, which then faces the
/// reduced floor `(√q − Σ_Z |g_l|√p_l)²`.
fn solve_split(prob: &SlotProblem, q: f64) -> Result<SlotSolution> {
    let silent: Vec<bool> = prob.h.iter().map(|x| x.norm_sqr() == 0.0).collect();
    let keep: Vec<usize> = (0..prob.p.len()).filter(|&l| !silent[l]).collect();
    let helper: f64 = (0..prob.p.len())
        .filter(|&l| silent[l])
        .map(|l| prob.g[l].norm() * prob.p[l].sqrt())
        .sum();
    let reduced_q = (q.sqrt() - helper).max(0.0).powi(2);
    let mut w = vec![C64::new(0.0, 0.0); prob.p.len()];
    let mut dual = None;
    let mut gap = 0.0;
    if !keep.is_empty() {
        let sub = SlotProblem {
            p: keep.iter().map(|&l| prob.p[l]).collect(),
            q: reduced_q,
            h: keep.iter().map(|&l| prob.h[l]).collect(),
            g: keep.iter().map(|&l| prob.g[l]).collect(),
            noise_variance: prob.noise_variance,
        };
        let s = solve_fr(&sub)?;
        for (i, &l) in keep.iter().enumerate() {
            w[l] = s.w[i];
        }
        gap = s.gap;
        // Map the reduced multiplier back: the floor gradient scales by
        // |a|/(|a|+c) with a = gᴴw over the kept BSs.
        let a = inner(&sub.g, &s.w).norm();
        dual = s.dual.map(|d| {
            let mut lambda = vec![0.0; prob.p.len()];
            for (i, &l) in keep.iter().enumerate() {
                lambda[l] = d.lambda[i];
            }
            for l in (0..prob.p.len()).filter(|&l| silent[l] && prob.p[l] > 0.0) {
                lambda[l] = d.mu * prob.g[l].norm() * a / prob.p[l].sqrt();
            }
            let mu = if a + helper > 0.0 { d.mu * a / (a + helper) } else { 0.0 };
            SlotDual { lambda, mu }
        });
    }
    let rot = phase_of(inner(&prob.g, &w));
    for l in 0..prob.p.len() {
        if silent[l] {
            w[l] = phase_of(prob.g[l]) * rot * prob.p[l].sqrt();
        }
    }
    Ok(SlotSolution {
        rate: slot_rate(&w, &prob.h, prob.noise_variance),
        w,
        dual,
        gap,
    })
}

/// Optimal rate only.
pub fn fr_value(p: &[f64], q: f64, h: &[C64], g: &[C64], noise_variance: f64) -> Result<f64> {
    solve_fr(&SlotProblem {
        p: p.to_vec(),
        q,
        h: h.to_vec(),
        g: g.to_vec(),
        noise_variance,
    })
    .map(|s| s.rate)
}

/// Full power on every BS with phases aligned to g. BSs the energy receiver
/// cannot hear are free, so they are phase-aligned with the data signal.
fn energy_beam(prob: &SlotProblem) -> Vec<C64> {
    let mut w: Vec<C64> = prob
        .p
        .iter()
        .zip(&prob.g)
        .map(|(&pl, gl)| if gl.norm_sqr() > 0.0 { phase_of(*gl) * pl.sqrt() } else { C64::new(0.0, 0.0) })
        .collect();
    let rot = phase_of(inner(&prob.h, &w));
    for l in 0..w.len() {
        if prob.g[l].norm_sqr() == 0.0 {
            w[l] = phase_of(prob.h[l]) * rot * prob.p[l].sqrt();
        }
    }
    w
}
