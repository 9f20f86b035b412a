//! The simulated world: one victim radar, point targets and interfering radars.
//!
//! Scenes are plain values. They round-trip through the scenario file format,
//! a TOML document with a `[victim]` table and `[[targets]]` /
//! `[[interferers]]` arrays, all in SI units.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::waveform::{beat_frequency, doppler_frequency, ChirpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Meters.
    pub range: f64,
    /// Normalized RCS, linear.
    pub rcs_norm: f64,
    /// Radial velocity in m/s, positive when approaching.
    #[serde(default)]
    pub velocity: f64,
}

impl Target {
    pub fn new(range: f64, rcs_norm: f64, velocity: f64) -> Self {
        Self {
            range,
            rcs_norm,
            velocity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range >= 0.0) {
            return Err(Error::config(format!("target range must be >= 0, got {}", self.range)));
        }
        if !(self.rcs_norm.is_finite() && self.rcs_norm >= 0.0) {
            return Err(Error::config(format!("target rcs_norm must be >= 0, got {}", self.rcs_norm)));
        }
        if !self.velocity.is_finite() {
            return Err(Error::config("target velocity must be finite"));
        }
        Ok(())
    }

    /// Dechirped echo frequency seen by `victim`, range beat plus Doppler.
    pub fn beat_frequency(&self, victim: &ChirpConfig) -> f64 {
        beat_frequency(self.range, victim.chirp_rate) + doppler_frequency(self.velocity, victim.start_freq)
    }

    /// Received echo amplitude under the scene's amplitude model.
    pub fn amplitude(&self, model: AmplitudeModel) -> f64 {
        let base = self.rcs_norm.sqrt();
        match model {
            AmplitudeModel::Normalized => base,
            AmplitudeModel::PathLoss => {
                if self.range > 0.0 {
                    base / (self.range * self.range)
                } else {
                    base
                }
            }
        }
    }
}

/// How target RCS maps to echo amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// `sqrt(rcs_norm)`, no propagation loss.
    #[default]
    Normalized,
    /// `sqrt(rcs_norm) / d^2`.
    PathLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    /// Aggressor waveform. Only the transmit side (start frequency, chirp
    /// rate, chirp time) is used; a zero chirp rate is a CW emitter.
    pub chirp: ChirpConfig,
    /// One-way distance to the victim, meters.
    pub range: f64,
    /// Received amplitude at the victim mixer output, linear.
    pub amp: f64,
    /// Aggressor chirp-start offset relative to the victim's first chirp, s.
    #[serde(default)]
    pub timing_offset: f64,
    /// Standard deviation of the per-victim-chirp phase increment, rad.
    #[serde(default)]
    pub phase_walk_std: f64,
    /// Aggressor chirp repetition interval, s. Defaults to `chirp.chirp_time`
    /// (back-to-back chirps); the aggressor is silent for the remainder of a
    /// longer interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_period: Option<f64>,
}

impl Interferer {
    pub fn period(&self) -> f64 {
        self.chirp_period.unwrap_or(self.chirp.chirp_time)
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp.validate_aggressor()?;
        if !(self.range.is_finite() && self.range >= 0.0) {
            return Err(Error::config("interferer range must be >= 0"));
        }
        if !(self.amp.is_finite() && self.amp >= 0.0) {
            return Err(Error::config("interferer amp must be >= 0"));
        }
        if !self.timing_offset.is_finite() {
            return Err(Error::config("interferer timing_offset must be finite"));
        }
        if !(self.phase_walk_std.is_finite() && self.phase_walk_std >= 0.0) {
            return Err(Error::config("interferer phase_walk_std must be >= 0"));
        }
        let period = self.period();
        if !(period.is_finite() && period >= self.chirp.chirp_time) {
            return Err(Error::config(format!(
                "interferer chirp_period {period} shorter than its chirp_time {}",
                self.chirp.chirp_time
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub seed: u64,
    /// Complex AWGN variance per ADC sample.
    pub noise_power: f64,
    #[serde(default)]
    pub amplitude_model: AmplitudeModel,
    /// AAF stopband edge, Hz. Defaults to twice the victim's passband.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aaf_stopband: Option<f64>,
    pub victim: ChirpConfig,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub interferers: Vec<Interferer>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.victim.validate()?;
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::config("noise_power must be >= 0"));
        }
        if let Some(stop) = self.aaf_stopband {
            if !(stop.is_finite() && stop > self.victim.lpf_bandwidth) {
                return Err(Error::config("aaf_stopband must exceed the victim passband"));
            }
        }
        for t in &self.targets {
            t.validate()?;
        }
        for i in &self.interferers {
            i.validate()?;
        }
        Ok(())
    }

    pub fn aaf_stopband(&self) -> f64 {
        self.aaf_stopband.unwrap_or(2.0 * self.victim.lpf_bandwidth)
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("scene serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn without_interferers(&self) -> Scene {
        Scene {
            interferers: Vec::new(),
            ..self.clone()
        }
    }

    pub fn without_targets(&self) -> Scene {
        Scene {
            targets: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Scene {
        Scene {
            seed,
            ..self.clone()
        }
    }

    pub fn to_scenario_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn from_scenario_str(text: &str) -> Result<Scene> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scene::from_scenario_str(&text).map_err(|e| match e {
            Error::Scenario(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_scenario_string()?).map_err(|e| Error::io(path, e))
    }
}

// Link budget, receiver noise and relative timing are free parameters.
// table1: interferer amplitude falls off as 1/d with the constant chosen so
// the unmitigated single-chirp SIRs land near 12.4 dB (T1) and 3.7 dB (T2).
// Noise puts T1 30 dB over the floor after the range FFT.
const TABLE1_CHIRPS: usize = 64;
const TABLE1_INTERFERER_AT_1M: f64 = 0.37;
const TABLE1_NOISE_POWER: f64 = 2048.0 / 1000.0 / 1_500_625.0;
const TABLE1_TIMING: [f64; 3] = [6.0e-6, 21.0e-6, 0.0];
const TABLE1_PHASE_WALK: f64 = 0.2;

// table2: clean chirps show the target about 10.5 dB over the floor and
// interfered chirps about 3 dB.
const TABLE2_INTERFERER_AMP: f64 = 125.0;
const TABLE2_NOISE_POWER: f64 = 45.0;
const TABLE2_TIMING: f64 = 11.0e-6;
const TABLE2_PHASE_WALK: f64 = 0.2;
const TABLE2_TARGET_SPEED: f64 = 2.0;

fn transmitter(start_freq: f64, chirp_rate: f64, chirp_time: f64) -> ChirpConfig {
    ChirpConfig {
        start_freq,
        bandwidth: chirp_rate * chirp_time,
        chirp_time,
        chirp_rate,
        sample_rate: 0.0,
        lpf_bandwidth: 0.0,
        samples_per_chirp: 0,
        chirps_per_cpi: 0,
    }
}

/// The long-range simulation setup: 76 GHz / 300 MHz / 51.2 us victim, two
/// static targets and three aggressors (two fast chirps and one CW tone).
///
/// T2's normalized RCS is stored as 3 (three times T1, as the prose states).
/// Target amplitudes follow the 1/d^2 path-loss model, which is what leaves
/// T2 buried despite its larger RCS; interferer amplitudes fall off as 1/d
/// over the listed aggressor distances. The fast-chirp aggressors emit one
/// chirp per victim chirp interval.
pub fn table1_scene() -> Scene {
    let victim = ChirpConfig::from_sweep(76e9, 300e6, 51.2e-6, 40e6, 10e6, 2048, TABLE1_CHIRPS);
    let period = victim.chirp_time;
    let aggressors = [
        (transmitter(76e9, 30e12, 10e-6), 10.0, Some(period)),
        (transmitter(76e9, 37.5e12, 8e-6), 20.0, Some(period)),
        (ChirpConfig::continuous_wave(76.1e9, period), 30.0, None),
    ];
    let interferers = aggressors
        .iter()
        .zip(TABLE1_TIMING)
        .map(|(&(chirp, range, chirp_period), timing_offset)| Interferer {
            chirp,
            range,
            amp: TABLE1_INTERFERER_AT_1M / range,
            timing_offset,
            phase_walk_std: TABLE1_PHASE_WALK,
            chirp_period,
        })
        .collect();
    Scene {
        name: "table1".into(),
        seed: 1,
        noise_power: TABLE1_NOISE_POWER,
        amplitude_model: AmplitudeModel::PathLoss,
        aaf_stopband: Some(20e6),
        victim,
        targets: vec![Target::new(35.0, 1.0, 0.0), Target::new(100.0, 3.0, 0.0)],
        interferers,
    }
}

/// The short-range field setup: 77 GHz / 750 MHz victim with 512 x 128
/// samples, an aggressor at one third of its chirp rate placed 2 m away, and
/// one moving target near 15 m.
pub fn table2_scene() -> Scene {
    let victim = ChirpConfig::from_sweep(77e9, 750e6, 29.56e-6, 20e6, 9e6, 512, 128);
    let aggressor = ChirpConfig::from_sweep(77e9, 682e6, 72.31e-6, 15e6, 6.75e6, 1024, 128);
    Scene {
        name: "table2".into(),
        seed: 2,
        noise_power: TABLE2_NOISE_POWER,
        amplitude_model: AmplitudeModel::Normalized,
        aaf_stopband: None,
        victim,
        targets: vec![Target::new(15.0, 1.0, TABLE2_TARGET_SPEED)],
        interferers: vec![Interferer {
            chirp: aggressor,
            range: 2.0,
            amp: TABLE2_INTERFERER_AMP,
            timing_offset: TABLE2_TIMING,
            phase_walk_std: TABLE2_PHASE_WALK,
            chirp_period: None,
        }],
    }
}
