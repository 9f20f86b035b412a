//! FMCW chirp descriptions and the closed-form beat frequencies they produce
//! after stretch processing.
//!
//! Only chirp-sequence FMCW is modelled. Doppler is signed so that an
//! approaching target (positive radial closing speed) has a positive shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance on `chirp_rate == bandwidth / sweep_time`.
pub const CHIRP_RATE_TOLERANCE: f64 = 1e-6;

/// One radar's waveform and receiver parameters. All values are SI units.
///
/// `bandwidth` is the sweep covered during the ADC window, i.e.
/// `chirp_rate * samples_per_chirp / sample_rate`, not `chirp_rate * chirp_time`.
/// `chirp_time` is the chirp repetition interval; when it exceeds the ADC
/// window the window is placed at the end of the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub start_freq: f64,
    pub bandwidth: f64,
    pub chirp_time: f64,
    pub chirp_rate: f64,
    pub sample_rate: f64,
    pub lpf_bandwidth: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_cpi: usize,
}

impl ChirpConfig {
    /// Builds a config whose chirp rate is derived from the swept bandwidth
    /// over the ADC window.
    pub fn from_sweep(
        start_freq: f64,
        bandwidth: f64,
        chirp_time: f64,
        sample_rate: f64,
        lpf_bandwidth: f64,
        samples_per_chirp: usize,
        chirps_per_cpi: usize,
    ) -> Self {
        let sweep_time = samples_per_chirp as f64 / sample_rate;
        Self {
            start_freq,
            bandwidth,
            chirp_time,
            chirp_rate: bandwidth / sweep_time,
            sample_rate,
            lpf_bandwidth,
            samples_per_chirp,
            chirps_per_cpi,
        }
    }

    /// A continuous-wave emitter, used for aggressors that do not sweep.
    pub fn continuous_wave(freq: f64, dwell: f64) -> Self {
        Self {
            start_freq: freq,
            bandwidth: 0.0,
            chirp_time: dwell,
            chirp_rate: 0.0,
            sample_rate: 1.0,
            lpf_bandwidth: 0.0,
            samples_per_chirp: 1,
            chirps_per_cpi: 1,
        }
    }

    /// Duration of the ADC capture window.
    pub fn sweep_time(&self) -> f64 {
        self.samples_per_chirp as f64 / self.sample_rate
    }

    /// Offset of the first ADC sample from the ramp start.
    pub fn adc_start(&self) -> f64 {
        (self.chirp_time - self.sweep_time()).max(0.0)
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    pub fn unambiguous_range(&self) -> f64 {
        unambiguous_range(self)
    }

    /// Range covered by one range-FFT bin when the FFT size equals the
    /// fast-time sample count.
    pub fn range_bin_spacing(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate / (2.0 * self.chirp_rate * self.samples_per_chirp as f64)
    }

    /// Fractional range-FFT bin at which a beat frequency lands.
    pub fn beat_bin(&self, beat_hz: f64) -> f64 {
        beat_hz * self.samples_per_chirp as f64 / self.sample_rate
    }

    /// Validates the config as a victim receiver: every field strictly
    /// positive, power-of-two fast-time length, complex sampling covering the
    /// AAF band, and a chirp rate consistent with the swept bandwidth.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("start_freq", self.start_freq),
            ("bandwidth", self.bandwidth),
            ("chirp_time", self.chirp_time),
            ("chirp_rate", self.chirp_rate),
            ("sample_rate", self.sample_rate),
            ("lpf_bandwidth", self.lpf_bandwidth),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if self.samples_per_chirp == 0 || !self.samples_per_chirp.is_power_of_two() {
            return Err(Error::config(format!(
                "samples_per_chirp must be a power of two, got {}",
                self.samples_per_chirp
            )));
        }
        if self.chirps_per_cpi == 0 {
            return Err(Error::config("chirps_per_cpi must be > 0"));
        }
        if self.sample_rate <= 2.0 * self.lpf_bandwidth {
            return Err(Error::config(format!(
                "sample_rate {} must exceed twice the AAF passband {}",
                self.sample_rate, self.lpf_bandwidth
            )));
        }
        let expected = self.bandwidth / self.sweep_time();
        if ((self.chirp_rate - expected) / expected).abs() > CHIRP_RATE_TOLERANCE {
            return Err(Error::config(format!(
                "chirp_rate {} inconsistent with bandwidth / sweep_time = {}",
                self.chirp_rate, expected
            )));
        }
        Ok(())
    }

    /// Validates the config as an aggressor transmitter. Only the emitted
    /// waveform matters here, so receiver fields are not checked and a zero
    /// chirp rate (continuous wave) is allowed.
    pub fn validate_aggressor(&self) -> Result<()> {
        if !(self.start_freq.is_finite() && self.start_freq > 0.0) {
            return Err(Error::config("aggressor start_freq must be > 0"));
        }
        if !(self.chirp_time.is_finite() && self.chirp_time > 0.0) {
            return Err(Error::config("aggressor chirp_time must be > 0"));
        }
        if !(self.chirp_rate.is_finite() && self.chirp_rate >= 0.0) {
            return Err(Error::config("aggressor chirp_rate must be >= 0"));
        }
        Ok(())
    }
}

/// A single post-mixer tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatTone {
    pub freq: f64,
    pub amp: f64,
    pub phase: f64,
}

impl BeatTone {
    pub fn new(freq: f64, amp: f64, phase: f64) -> Result<Self> {
        if !freq.is_finite() || !phase.is_finite() {
            return Err(Error::NonFinite("beat tone frequency/phase".into()));
        }
        if amp.is_nan() || amp < 0.0 {
            return Err(Error::config(format!("beat tone amplitude must be >= 0, got {amp}")));
        }
        Ok(Self { freq, amp, phase })
    }
}

/// Range component of the beat frequency, `2 d mu / c`.
pub fn beat_frequency(target_range: f64, chirp_rate: f64) -> f64 {
    2.0 * target_range * chirp_rate / SPEED_OF_LIGHT
}

/// Doppler shift `2 v f_c / c`; positive for an approaching target.
pub fn doppler_frequency(radial_velocity: f64, start_freq: f64) -> f64 {
    2.0 * radial_velocity * start_freq / SPEED_OF_LIGHT
}

/// Largest range whose beat frequency stays inside the AAF passband.
pub fn unambiguous_range(config: &ChirpConfig) -> f64 {
    SPEED_OF_LIGHT * config.lpf_bandwidth / (2.0 * config.chirp_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> ChirpConfig {
        ChirpConfig::from_sweep(76e9, 300e6, 51.2e-6, 40e6, 10e6, 2048, 64)
    }

    #[test]
    fn zero_range_has_zero_beat() {
        assert_eq!(beat_frequency(0.0, 5.86e12), 0.0);
    }

    #[test]
    fn beat_frequency_t1() {
        let f = beat_frequency(35.0, 5.86e12);
        let expected = 2.0 * 35.0 * 5.86e12 / 299_792_458.0;
        assert!((f - expected).abs() < 1e-6);
        assert!((f - 1.368e6).abs() < 1e3, "{f}");
    }

    #[test]
    fn beat_frequency_at_unambiguous_edge() {
        let f = beat_frequency(256.0, 5.86e12);
        assert!((f - 10.0e6).abs() / 10.0e6 < 1e-3, "{f}");
    }

    #[test]
    fn beat_frequency_is_linear_in_range() {
        for &(d, mu) in &[(1.0, 1e12), (35.0, 5.86e12), (123.4, 29.3e12)] {
            let one = beat_frequency(d, mu);
            let two = beat_frequency(2.0 * d, mu);
            assert!((two - 2.0 * one).abs() <= 1e-9 * two.abs());
        }
    }

    #[test]
    fn doppler_sign_convention() {
        assert_eq!(doppler_frequency(0.0, 77e9), 0.0);
        let up = doppler_frequency(10.0, 76e9);
        let down = doppler_frequency(-10.0, 76e9);
        assert!((up - 5069.5).abs() < 1.0, "{up}");
        assert_eq!(up, -down);
    }

    #[test]
    fn unambiguous_range_examples() {
        let r1 = unambiguous_range(&table1());
        assert!((r1 - 256.0).abs() < 1.0, "{r1}");

        let victim2 = ChirpConfig {
            lpf_bandwidth: 9e6,
            chirp_rate: 29.306e12,
            ..table1()
        };
        let r2 = unambiguous_range(&victim2);
        assert!((r2 - 46.0).abs() < 0.5, "{r2}");

        let closed = ChirpConfig {
            lpf_bandwidth: 0.0,
            ..table1()
        };
        assert_eq!(unambiguous_range(&closed), 0.0);
    }

    #[test]
    fn range_resolution_table1() {
        let res = table1().range_resolution();
        assert!((res - SPEED_OF_LIGHT / 600e6).abs() / res < 1e-9);
        // 0.5 m is the rounded figure for c = 3e8.
        assert!((res - 0.5).abs() / 0.5 < 1e-3);
    }

    #[test]
    fn validation() {
        table1().validate().unwrap();

        let odd = ChirpConfig {
            samples_per_chirp: 2000,
            ..table1()
        };
        assert!(odd.validate().is_err());

        let under = ChirpConfig {
            sample_rate: 15e6,
            ..table1()
        };
        assert!(under.validate().is_err());

        let skew = ChirpConfig {
            chirp_rate: 5.86e12,
            ..table1()
        };
        assert!(skew.validate().is_err(), "5.86 vs 5.859375 MHz/us exceeds 1e-6");

        let cw = ChirpConfig::continuous_wave(76.1e9, 51.2e-6);
        assert!(cw.validate().is_err());
        cw.validate_aggressor().unwrap();
    }

    #[test]
    fn beat_tone_invariants() {
        assert!(BeatTone::new(1e6, -1.0, 0.0).is_err());
        assert!(BeatTone::new(f64::NAN, 1.0, 0.0).is_err());
        BeatTone::new(-1e6, 0.0, 1.0).unwrap();
    }
}
