//! Domain types shared by every solver: system parameters, channels, energy
//! arrivals, beamforming schedules and the scenario file format.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Absolute slack allowed when checking cumulative energy causality.
pub const CAUSALITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub num_bs: usize,
    pub num_slots: usize,
    /// Seconds per slot.
    pub slot_length: f64,
    /// Receiver noise power σ² in Watts.
    pub noise_variance: f64,
    /// RF-to-DC conversion efficiency η of the energy receiver.
    pub eta: f64,
    /// Hz; only used when reporting rates in bit/s.
    pub bandwidth: f64,
}

impl SystemParams {
    pub fn new(
        num_bs: usize,
        num_slots: usize,
        slot_length: f64,
        noise_variance: f64,
        eta: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let params = SystemParams {
            num_bs,
            num_slots,
            slot_length,
            noise_variance,
            eta,
            bandwidth,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bs == 0 {
            return Err(Error::InvalidParameter("num_bs must be at least 1".into()));
        }
        if self.num_slots == 0 {
            return Err(Error::InvalidParameter("num_slots must be at least 1".into()));
        }
        if !(self.slot_length > 0.0 && self.slot_length.is_finite()) {
            return Err(Error::InvalidParameter("slot_length must be positive".into()));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_variance must be positive".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter("eta must lie in (0, 1)".into()));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidParameter("bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// Flat-fading channels from the base stations to the data receiver (`h`)
/// and to the energy receiver (`g`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub h: Vec<C64>,
    pub g: Vec<C64>,
}

impl ChannelState {
    pub fn new(h: Vec<C64>, g: Vec<C64>) -> Result<Self> {
        if h.len() != g.len() {
            return Err(Error::DimensionMismatch {
                what: "energy channel g",
                expected: h.len(),
                found: g.len(),
            });
        }
        for (name, v) in [("h", &h), ("g", &g)] {
            if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::InvalidParameter(format!("channel {name} is not finite")));
            }
            if v.iter().all(|c| c.norm_sqr() == 0.0) {
                return Err(Error::InvalidParameter(format!("channel {name} is all zero")));
            }
        }
        Ok(ChannelState { h, g })
    }

    pub fn num_bs(&self) -> usize {
        self.h.len()
    }

    /// ρ = |gᴴh| / (‖g‖‖h‖).
    pub fn correlation(&self) -> f64 {
        let inner = inner(&self.g, &self.h).norm();
        let norm = (norm_sqr(&self.g) * norm_sqr(&self.h)).sqrt();
        (inner / norm).clamp(0.0, 1.0)
    }
}

/// Harvested energy per base station and slot, `e[l][n]` in Joules.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    e: Vec<Vec<f64>>,
}

impl EnergyProfile {
    pub fn new(e: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = e.first() else {
            return Err(Error::InvalidParameter("energy profile has no rows".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidParameter("energy profile has no slots".into()));
        }
        for row in &e {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "energy profile row",
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::InvalidParameter(
                    "harvested energy must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(EnergyProfile { e })
    }

    pub fn num_bs(&self) -> usize {
        self.e.len()
    }

    pub fn num_slots(&self) -> usize {
        self.e[0].len()
    }

    pub fn get(&self, bs: usize, slot: usize) -> f64 {
        self.e[bs][slot]
    }

    pub fn row(&self, bs: usize) -> &[f64] {
        &self.e[bs]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.e
    }

    pub fn total(&self, bs: usize) -> f64 {
        self.e[bs].iter().sum()
    }

    pub fn grand_total(&self) -> f64 {
        (0..self.num_bs()).map(|l| self.total(l)).sum()
    }

    /// Running sums Σ_{t≤n} E[l][t] for every slot n.
    pub fn cumulative(&self, bs: usize) -> Vec<f64> {
        self.e[bs]
            .iter()
            .scan(0.0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    /// Profile restricted to slots `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        EnergyProfile::new(self.e.iter().map(|row| row[range.clone()].to_vec()).collect())
    }
}

/// One complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub channels: ChannelState,
    pub profile: EnergyProfile,
    /// Mean harvest per BS in Watts, when known (used by the online scheduler).
    pub harvest_rates: Option<Vec<f64>>,
}

impl Scenario {
    pub fn new(
        params: SystemParams,
        channels: ChannelState,
        profile: EnergyProfile,
        harvest_rates: Option<Vec<f64>>,
    ) -> Result<Self> {
        params.validate()?;
        let l = params.num_bs;
        check_len("channel h", l, channels.h.len())?;
        check_len("channel g", l, channels.g.len())?;
        check_len("energy profile rows", l, profile.num_bs())?;
        check_len("energy profile slots", params.num_slots, profile.num_slots())?;
        if let Some(rates) = &harvest_rates {
            check_len("harvest rates", l, rates.len())?;
            if rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
                return Err(Error::InvalidParameter(
                    "harvest rates must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(Scenario {
            params,
            channels,
            profile,
            harvest_rates,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from(self))?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Same channels and parameters over a different energy profile.
    pub fn with_profile(&self, profile: EnergyProfile) -> Result<Self> {
        let mut params = self.params.clone();
        params.num_slots = profile.num_slots();
        Scenario::new(
            params,
            self.channels.clone(),
            profile,
            self.harvest_rates.clone(),
        )
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(rename = "L")]
    pub num_bs: usize,
    #[serde(rename = "N")]
    pub num_slots: usize,
    pub slot_length: f64,
    pub noise_variance: f64,
    pub eta: f64,
    pub h_re: Vec<f64>,
    pub h_im: Vec<f64>,
    pub g_re: Vec<f64>,
    pub g_im: Vec<f64>,
    #[serde(rename = "E")]
    pub energy: Vec<Vec<f64>>,
    #[serde(rename = "P_H", default, skip_serializing_if = "Option::is_none")]
    pub harvest_rates: Option<Vec<f64>>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    1e6
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let params = SystemParams::new(
            f.num_bs,
            f.num_slots,
            f.slot_length,
            f.noise_variance,
            f.eta,
            f.bandwidth,
        )?;
        let h = zip_complex("h", &f.h_re, &f.h_im)?;
        let g = zip_complex("g", &f.g_re, &f.g_im)?;
        let channels = ChannelState::new(h, g)?;
        let profile = EnergyProfile::new(f.energy)?;
        Scenario::new(params, channels, profile, f.harvest_rates)
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            num_bs: s.params.num_bs,
            num_slots: s.params.num_slots,
            slot_length: s.params.slot_length,
            noise_variance: s.params.noise_variance,
            eta: s.params.eta,
            h_re: s.channels.h.iter().map(|c| c.re).collect(),
            h_im: s.channels.h.iter().map(|c| c.im).collect(),
            g_re: s.channels.g.iter().map(|c| c.re).collect(),
            g_im: s.channels.g.iter().map(|c| c.im).collect(),
            energy: s.profile.rows().to_vec(),
            harvest_rates: s.harvest_rates.clone(),
            bandwidth: s.params.bandwidth,
        }
    }
}

fn zip_complex(what: &'static str, re: &[f64], im: &[f64]) -> Result<Vec<C64>> {
    if re.len() != im.len() {
        return Err(Error::DimensionMismatch {
            what,
            expected: re.len(),
            found: im.len(),
        });
    }
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

/// Per-slot beamforming vectors with their rates and delivered RF energy.
///
/// Construct with [`BeamformingSchedule::new`]; the derived vectors are
/// always recomputed from `w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeamformingSchedule {
    w: Vec<Vec<C64>>,
    per_slot_rate: Vec<f64>,
    rf_energy: Vec<f64>,
}

impl BeamformingSchedule {
    pub fn new(w: Vec<Vec<C64>>, params: &SystemParams, channels: &ChannelState) -> Result<Self> {
        check_len("schedule slots", params.num_slots, w.len())?;
        for wn in &w {
            check_len("beamforming vector", channels.num_bs(), wn.len())?;
        }
        let per_slot_rate = w
            .iter()
            .map(|wn| slot_rate(wn, &channels.h, params.noise_variance))
            .collect();
        let rf_energy = w
            .iter()
            .map(|wn| params.eta * inner(&channels.g, wn).norm_sqr())
            .collect();
        Ok(BeamformingSchedule {
            w,
            per_slot_rate,
            rf_energy,
        })
    }

    pub fn zeros(params: &SystemParams, channels: &ChannelState) -> Self {
        let w = vec![vec![C64::new(0.0, 0.0); channels.num_bs()]; params.num_slots];
        BeamformingSchedule::new(w, params, channels).expect("consistent dimensions")
    }

    pub fn beams(&self) -> &[Vec<C64>] {
        &self.w
    }

    pub fn per_slot_rate(&self) -> &[f64] {
        &self.per_slot_rate
    }

    pub fn rf_energy(&self) -> &[f64] {
        &self.rf_energy
    }

    pub fn num_slots(&self) -> usize {
        self.w.len()
    }

    pub fn total_rate(&self) -> f64 {
        self.per_slot_rate.iter().sum()
    }

    pub fn total_rf_energy(&self) -> f64 {
        self.rf_energy.iter().sum()
    }

    /// |w_{l,n}|², the energy BS `l` spends in slot `n`.
    pub fn spend(&self, bs: usize, slot: usize) -> f64 {
        self.w[slot][bs].norm_sqr()
    }
}

/// log(1 + |hᴴw|²/σ²) in nats.
pub fn slot_rate(w: &[C64], h: &[C64], noise_variance: f64) -> f64 {
    (inner(h, w).norm_sqr() / noise_variance).ln_1p()
}

/// aᴴb.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Σ_n log(1 + |hᴴw_n|²/σ²), re-evaluated from the beamformers.
pub fn throughput(schedule: &BeamformingSchedule, params: &SystemParams, h: &[C64]) -> Result<f64> {
    check_schedule(schedule, params, h.len())?;
    Ok(schedule
        .beams()
        .iter()
        .map(|wn| slot_rate(wn, h, params.noise_variance))
        .sum())
}

/// Σ_n η|gᴴw_n|², re-evaluated from the beamformers.
pub fn rf_charged_energy(
    schedule: &BeamformingSchedule,
    params: &SystemParams,
    g: &[C64],
) -> Result<f64> {
    check_schedule(schedule, params, g.len())?;
    Ok(schedule
        .beams()
        .iter()
        .map(|wn| params.eta * inner(g, wn).norm_sqr())
        .sum())
}

fn check_schedule(schedule: &BeamformingSchedule, params: &SystemParams, l: usize) -> Result<()> {
    check_len("schedule slots", params.num_slots, schedule.num_slots())?;
    for wn in schedule.beams() {
        check_len("beamforming vector", l, wn.len())?;
    }
    Ok(())
}

/// Outcome of [`check_causality`]; slot and BS indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalityCheck {
    pub first_violation: Option<(usize, usize)>,
    /// Largest cumulative overspend observed (≤ 0 when causal).
    pub worst_excess: f64,
}

impl CausalityCheck {
    pub fn is_causal(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Verifies Σ_{t≤n}|w_{l,t}|² ≤ Σ_{t≤n}E_{l,t} + 1e-9 for every BS and slot.
///
/// The first violation is reported in slot-major order.
pub fn check_causality(schedule: &BeamformingSchedule, profile: &EnergyProfile) -> CausalityCheck {
    let l_count = profile.num_bs().min(schedule.beams().first().map_or(0, Vec::len));
    let n_count = profile.num_slots().min(schedule.num_slots());
    let mut spent = vec![0.0; l_count];
    let mut harvested = vec![0.0; l_count];
    let mut first = None;
    let mut worst = f64::NEG_INFINITY;
    for n in 0..n_count {
        for l in 0..l_count {
            spent[l] += schedule.spend(l, n);
            harvested[l] += profile.get(l, n);
            let excess = spent[l] - harvested[l];
            worst = worst.max(excess);
            if excess > CAUSALITY_SLACK && first.is_none() {
                first = Some((l, n));
            }
        }
    }
    CausalityCheck {
        first_violation: first,
        worst_excess: worst,
    }
}

/// Sampled boundary of the achievable energy-throughput region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    /// `(q, T)` pairs: RF energy floor in Joules and optimal throughput in nats.
    pub points: Vec<(f64, f64)>,
    pub q_max: f64,
}

impl TradeoffCurve {
    /// Checks the ordering invariants; `tol` is the allowed increase in T.
    pub fn is_well_formed(&self, tol: f64) -> bool {
        let increasing_q = self.points.windows(2).all(|p| p[1].0 > p[0].0);
        let monotone_t = self.points.windows(2).all(|p| p[1].1 <= p[0].1 + tol);
        let bounded = self
            .points
            .iter()
            .all(|&(q, _)| q <= self.q_max * (1.0 + 1e-12));
        increasing_q && monotone_t && bounded
    }
}
