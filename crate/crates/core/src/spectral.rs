//! Range FFT, the primary/reference split and Doppler processing.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{ChirpConfig, SPEED_OF_LIGHT};

/// Floor applied before taking logs so empty bins stay finite.
const MIN_POWER: f64 = 1e-30;

/// 10 log10 of |x|^2, floored at -300 dB.
pub fn power_db(x: Complex64) -> f64 {
    10.0 * x.norm_sqr().max(MIN_POWER).log10()
}

pub fn spectrum_db(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|&z| power_db(z)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            // Periodic Hann.
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Rect => "rect",
            Window::Hann => "hann",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(Error::config(format!("unknown window '{other}' (expected rect or hann)"))),
        }
    }
}

/// A planned forward FFT with a fixed window, reusable across chirps.
#[derive(Clone)]
pub struct RangeFft {
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
    window: Window,
}

impl fmt::Debug for RangeFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RangeFft")
            .field("n_fft", &self.n_fft)
            .field("window", &self.window)
            .finish()
    }
}

impl RangeFft {
    pub fn new(n_fft: usize, window: Window) -> Result<Self> {
        if n_fft == 0 || !n_fft.is_power_of_two() {
            return Err(Error::config(format!("FFT size must be a power of two, got {n_fft}")));
        }
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self { fft, n_fft, window })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Windows `samples` over their own length, zero-pads to `n_fft` and
    /// transforms. No normalization.
    pub fn process(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        if samples.len() > self.n_fft {
            return Err(Error::Dimension(format!(
                "{} samples exceed FFT size {}",
                samples.len(),
                self.n_fft
            )));
        }
        let w = self.window.coefficients(samples.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for ((b, &s), &c) in buf.iter_mut().zip(samples).zip(&w) {
            *b = s * c;
        }
        self.fft.process(&mut buf);
        Ok(buf)
    }
}

pub fn range_fft(samples: &[Complex64], n_fft: usize, window: Window) -> Result<Vec<Complex64>> {
    RangeFft::new(n_fft, window)?.process(samples)
}

/// Positive-half bins and the conjugated, order-reversed negative half.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpectrum {
    pub pri: Vec<Complex64>,
    pub reference: Vec<Complex64>,
    pub n_fft: usize,
}

impl SplitSpectrum {
    /// Rebuilds the full spectrum.
    pub fn unsplit(&self) -> Vec<Complex64> {
        let half = self.n_fft / 2;
        let mut out = Vec::with_capacity(self.n_fft);
        out.extend_from_slice(&self.pri);
        out.extend((0..half).map(|i| self.reference[half - 1 - i].conj()));
        out
    }
}

/// `pri = X[0..N/2]`, `reference[n] = conj(X[N-1-n])`.
pub fn split(spectrum: &[Complex64]) -> Result<SplitSpectrum> {
    let n = spectrum.len();
    if n == 0 || n % 2 != 0 {
        return Err(Error::Dimension(format!("split needs an even, non-empty spectrum, got {n}")));
    }
    let half = n / 2;
    Ok(SplitSpectrum {
        pri: spectrum[..half].to_vec(),
        reference: (0..half).map(|i| spectrum[n - 1 - i].conj()).collect(),
        n_fft: n,
    })
}

/// Total power of the reference half, `sum |ref|^2`.
pub fn interference_power(reference: &[Complex64]) -> f64 {
    reference.iter().map(|z| z.norm_sqr()).sum()
}

/// Power map in dB with zero Doppler centered. Rows are Doppler bins,
/// columns range bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub power_db: Array2<f64>,
    /// Meters, one per column.
    pub range_axis: Vec<f64>,
    /// Radial velocity in m/s, one per row; positive is approaching.
    pub doppler_axis: Vec<f64>,
}

impl RangeDopplerMap {
    /// Row index of zero Doppler.
    pub fn zero_doppler_row(&self) -> usize {
        self.doppler_axis.len() / 2
    }

    /// Nearest row to `velocity`.
    pub fn doppler_row(&self, velocity: f64) -> usize {
        nearest(&self.doppler_axis, velocity)
    }

    /// Nearest column to `range`.
    pub fn range_col(&self, range: f64) -> usize {
        nearest(&self.range_axis, range)
    }
}

fn nearest(axis: &[f64], value: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - value).abs().total_cmp(&(b.1 - value).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Range of the centre of bin `k` for an `n_fft`-point range FFT.
pub fn range_axis(victim: &ChirpConfig, bins: usize, n_fft: usize) -> Vec<f64> {
    let spacing = SPEED_OF_LIGHT * victim.sample_rate / (2.0 * victim.chirp_rate * n_fft as f64);
    (0..bins).map(|k| k as f64 * spacing).collect()
}

/// FFT across chirps for every range column of `filtered` (rows = chirps),
/// zero-padding the chirp count to a power of two, then fftshift and dB.
pub fn doppler_fft(filtered: &Array2<Complex64>, victim: &ChirpConfig) -> Result<RangeDopplerMap> {
    let (m, bins) = filtered.dim();
    if m == 0 || bins == 0 {
        return Err(Error::Dimension("doppler_fft needs a non-empty matrix".into()));
    }
    let mp = m.next_power_of_two();
    let fft = FftPlanner::new().plan_fft_forward(mp);
    let columns: Vec<Vec<f64>> = (0..bins)
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![Complex64::new(0.0, 0.0); mp];
            for (b, &z) in buf.iter_mut().zip(filtered.column(c)) {
                *b = z;
            }
            fft.process(&mut buf);
            (0..mp).map(|r| power_db(buf[(r + mp / 2) % mp])).collect()
        })
        .collect();
    let power_db = Array2::from_shape_fn((mp, bins), |(r, c)| columns[c][r]);
    let prf_bin = 1.0 / (mp as f64 * victim.chirp_time);
    let doppler_axis = (0..mp)
        .map(|r| (r as f64 - (mp / 2) as f64) * prf_bin * SPEED_OF_LIGHT / (2.0 * victim.start_freq))
        .collect();
    Ok(RangeDopplerMap {
        power_db,
        range_axis: range_axis(victim, bins, 2 * bins),
        doppler_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut x = vec![c(0.0, 0.0); 16];
        x[0] = c(1.0, 0.0);
        let y = range_fft(&x, 16, Window::Rect).unwrap();
        assert!(y.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn tone_lands_on_its_bin() {
        let n = 64;
        let x: Vec<_> = (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * 8.0 * i as f64 / n as f64)).collect();
        let y = range_fft(&x, n, Window::Rect).unwrap();
        let peak = (0..n).max_by(|&a, &b| y[a].norm().total_cmp(&y[b].norm())).unwrap();
        assert_eq!(peak, 8);
        assert!((y[8].norm() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn fft_size_checks() {
        assert!(range_fft(&[c(1.0, 0.0); 3], 6, Window::Rect).is_err());
        assert!(range_fft(&[c(1.0, 0.0); 9], 8, Window::Rect).is_err());
        let y = range_fft(&[c(1.0, 0.0); 4], 8, Window::Hann).unwrap();
        assert_eq!(y.len(), 8);
    }

    #[test]
    fn split_real_input_is_shifted_copy() {
        let x: Vec<_> = (0..32).map(|i| c(((i * 7919) % 13) as f64 - 6.0, 0.0)).collect();
        let y = range_fft(&x, 32, Window::Rect).unwrap();
        let s = split(&y).unwrap();
        for n in 0..15 {
            assert!((s.reference[n] - s.pri[n + 1]).norm() < 1e-9);
        }
    }

    #[test]
    fn split_edge_cases() {
        assert!(split(&[c(1.0, 0.0); 5]).is_err());
        assert!(split(&[]).is_err());
        let z = split(&[c(0.0, 0.0); 8]).unwrap();
        assert!(z.pri.iter().chain(&z.reference).all(|v| v.norm() == 0.0));
        let mut e = vec![c(0.0, 0.0); 8];
        e[2] = c(1.0, 0.0);
        let s = split(&e).unwrap();
        assert!(s.reference.iter().all(|v| v.norm() == 0.0));
        assert_eq!(s.unsplit(), e);
    }

    #[test]
    fn interference_power_examples() {
        assert_eq!(interference_power(&[c(0.0, 0.0); 4]), 0.0);
        assert_eq!(interference_power(&[c(0.0, 1.0), c(0.0, 0.0)]), 1.0);
        let v: Vec<_> = (0..1024).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
        assert!((interference_power(&v) - 1024.0).abs() < 1e-9);
    }

    fn victim() -> ChirpConfig {
        ChirpConfig::from_sweep(77e9, 750e6, 29.56e-6, 20e6, 9e6, 512, 16)
    }

    #[test]
    fn static_tone_is_zero_doppler() {
        let m = Array2::from_elem((16, 4), c(1.0, 0.5));
        let rd = doppler_fft(&m, &victim()).unwrap();
        let zero = rd.zero_doppler_row();
        assert_eq!(rd.doppler_axis[zero], 0.0);
        for col in 0..4 {
            let best = (0..16).max_by(|&a, &b| rd.power_db[[a, col]].total_cmp(&rd.power_db[[b, col]])).unwrap();
            assert_eq!(best, zero);
        }
    }

    #[test]
    fn phase_ramp_lands_on_shifted_bin() {
        let q = 3;
        let m = Array2::from_shape_fn((16, 2), |(i, _)| Complex64::from_polar(1.0, 2.0 * PI * (q * i) as f64 / 16.0));
        let rd = doppler_fft(&m, &victim()).unwrap();
        let best = (0..16).max_by(|&a, &b| rd.power_db[[a, 0]].total_cmp(&rd.power_db[[b, 0]])).unwrap();
        assert_eq!(best, 8 + q);
        assert!(rd.doppler_axis[best] > 0.0);
    }

    #[test]
    fn doppler_pads_to_power_of_two() {
        let m = Array2::from_elem((5, 3), c(1.0, 0.0));
        let rd = doppler_fft(&m, &victim()).unwrap();
        assert_eq!(rd.power_db.dim(), (8, 3));
        assert!(rd.power_db.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn window_parse() {
        assert_eq!("HANN".parse::<Window>().unwrap(), Window::Hann);
        assert!("kaiser".parse::<Window>().is_err());
        assert_eq!(Window::Rect.to_string(), "rect");
    }
}
