use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{ChannelState, EnergyProfile, Scenario, SystemParams};
use crate::{Error, Result, C64};

/// Experiment configuration. Every field has a default, so `{}` is a valid
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Meters, one entry per BS.
    pub bs_positions: Vec<[f64; 2]>,
    pub dr_position: [f64; 2],
    pub er_position: [f64; 2],
    pub pathloss_exponent: f64,
    /// Average power gain at 1 m.
    pub pathloss_constant: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Noise power spectral density, W/Hz.
    #[serde(rename = "N0", alias = "n0")]
    pub n0: f64,
    #[serde(rename = "N", alias = "num_slots")]
    pub num_slots: usize,
    /// Seconds.
    pub slot_length: f64,
    pub eta: f64,
    /// Mean harvest power per BS, Watts.
    #[serde(alias = "P_H")]
    pub poisson_means: Vec<f64>,
    /// Harvest arrives in multiples of this many Joules.
    pub energy_quantum: f64,
    pub rng_seed: u64,
    pub trials: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let h = 50.0 * 3f64.sqrt() / 2.0;
        ScenarioConfig {
            bs_positions: vec![[0.0, 0.0], [50.0, 0.0], [25.0, h]],
            dr_position: [25.0, h / 3.0],
            er_position: [10.0, 0.0],
            pathloss_exponent: 2.5,
            pathloss_constant: 1e-3,
            bandwidth: 1e6,
            n0: 1e-15,
            num_slots: 60,
            slot_length: 1.0,
            eta: 0.8,
            poisson_means: vec![0.1; 3],
            energy_quantum: 0.01,
            rng_seed: 1,
            trials: 100,
        }
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl ScenarioConfig {
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn noise_variance(&self) -> f64 {
        self.n0 * self.bandwidth
    }

    pub fn dr_distances(&self) -> Vec<f64> {
        self.bs_positions.iter().map(|&p| distance(p, self.dr_position)).collect()
    }

    pub fn er_distances(&self) -> Vec<f64> {
        self.bs_positions.iter().map(|&p| distance(p, self.er_position)).collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.bs_positions.is_empty() {
            return bad("at least one BS position is required");
        }
        if self.poisson_means.len() != self.num_bs() {
            return Err(Error::DimensionMismatch {
                what: "P_H",
                expected: self.num_bs(),
                found: self.poisson_means.len(),
            });
        }
        if self.poisson_means.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad("P_H entries must be finite and nonnegative");
        }
        if self.dr_distances().iter().chain(&self.er_distances()).any(|&d| !(d > 0.0)) {
            return bad("every BS-receiver distance must be positive");
        }
        if !(self.pathloss_constant > 0.0 && self.pathloss_exponent.is_finite()) {
            return bad("pathloss parameters must be positive and finite");
        }
        if !(self.energy_quantum > 0.0) {
            return bad("energy_quantum must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        SystemParams::new(
            self.num_bs(),
            self.num_slots,
            self.slot_length,
            self.noise_variance(),
            self.eta,
            self.bandwidth,
        )
        .map(|_| ())
    }
}

/// Seed of trial `trial` derived from the base seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64)
}

/// Draws one realization: Rayleigh-faded channels with distance pathloss and
/// quantized Poisson harvests. Draw order is h, then g, then the harvest rows.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channel = |d: f64, rng: &mut ChaCha8Rng| -> C64 {
        let a: f64 = rng.sample(Exp1);
        let gain = config.pathloss_constant * a / d.powf(config.pathloss_exponent);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        C64::from_polar(gain.sqrt(), phase)
    };
    let h: Vec<C64> = config.dr_distances().into_iter().map(|d| channel(d, &mut rng)).collect();
    let g: Vec<C64> = config.er_distances().into_iter().map(|d| channel(d, &mut rng)).collect();
    let rows = config
        .poisson_means
        .iter()
        .map(|&ph| {
            let mean = ph * config.slot_length / config.energy_quantum;
            if mean == 0.0 {
                return Ok(vec![0.0; config.num_slots]);
            }
            let dist = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok((0..config.num_slots)
                .map(|_| rng.sample(dist) * config.energy_quantum)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let params = SystemParams::new(
        config.num_bs(),
        config.num_slots,
        config.slot_length,
        config.noise_variance(),
        config.eta,
        config.bandwidth,
    )?;
    Scenario::new(
        params,
        ChannelState::new(h, g)?,
        EnergyProfile::new(rows)?,
        Some(config.poisson_means.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_geometry() {
        let c = ScenarioConfig::default();
        for d in c.dr_distances() {
            assert_relative_eq!(d, 50.0 / 3f64.sqrt(), max_relative = 1e-12);
        }
        let er = c.er_distances();
        assert_relative_eq!(er[0], 10.0);
        assert_relative_eq!(er[1], 40.0);
        assert_relative_eq!(er[2], 2100f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(c.noise_variance(), 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn empty_object_is_the_default_config() {
        let c: ScenarioConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ScenarioConfig::default());
    }

    #[test]
    fn zero_distance_is_rejected() {
        let c = ScenarioConfig {
            er_position: [0.0, 0.0],
            ..Default::default()
        };
        assert!(generate_scenario(&c, 1).is_err());
    }

    #[test]
    fn harvest_is_quantized() {
        let s = generate_scenario(&ScenarioConfig::default(), 5).unwrap();
        for row in s.profile.rows() {
            for &e in row {
                let k = e / 0.01;
                assert!((k - k.round()).abs() < 1e-9);
            }
        }
    }
}
