//! Post-mixer baseband synthesis of one CPI.
//!
//! Components are evaluated analytically at `OVERSAMPLING * f_s`, summed,
//! passed through a real linear-phase AAF and decimated to the ADC rate.
//! Noise is added after decimation so that `noise_power` is the per-sample
//! variance the ADC sees.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{AmplitudeModel, Interferer, Scene, Target};
use crate::waveform::{doppler_frequency, ChirpConfig, SPEED_OF_LIGHT};

/// Synthesis rate as a multiple of the ADC rate.
pub const OVERSAMPLING: usize = 4;

/// Stopband attenuation the AAF designer aims for. The Kaiser length
/// estimate is a little optimistic, so this carries margin over 60 dB.
const AAF_DESIGN_ATTENUATION_DB: f64 = 66.0;

// Fractions of the oversampled Nyquist band where the analytic alias gate
// starts to roll off and where it reaches zero.
const GATE_START: f64 = 0.6;
const GATE_STOP: f64 = 0.85;

// RNG substream kinds.
const STREAM_NOISE: u64 = 1;
const STREAM_SEGMENT: u64 = 2;
const STREAM_WALK: u64 = 3;

/// A real, symmetric FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub group_delay: usize,
}

impl FirFilter {
    /// Complex frequency response at `freq` for a filter running at `rate`.
    pub fn response(&self, freq: f64, rate: f64) -> Complex64 {
        let w = -2.0 * PI * freq / rate;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, &h)| Complex64::from_polar(h, w * n as f64))
            .sum()
    }

    pub fn magnitude_db(&self, freq: f64, rate: f64) -> f64 {
        20.0 * self.response(freq, rate).norm().max(1e-300).log10()
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc lowpass with unit DC gain and the cutoff midway
/// between the band edges.
pub fn design_aaf(passband: f64, stopband: f64, rate: f64) -> Result<FirFilter> {
    if !(passband > 0.0 && passband < stopband && stopband < rate / 2.0) {
        return Err(Error::config(format!(
            "AAF band edges need 0 < passband ({passband}) < stopband ({stopband}) < rate/2 ({})",
            rate / 2.0
        )));
    }
    let atten = AAF_DESIGN_ATTENUATION_DB;
    let beta = 0.1102 * (atten - 8.7);
    let transition = 2.0 * PI * (stopband - passband) / rate;
    let mut len = ((atten - 7.95) / (2.285 * transition)).ceil() as usize + 1;
    if len % 2 == 0 {
        len += 1;
    }
    let order = (len - 1) as f64;
    let cutoff = 0.5 * (passband + stopband) / rate;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let m = n as f64 - order / 2.0;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let r = 2.0 * n as f64 / order - 1.0;
            let window = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * window
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    // Enforce exact symmetry against rounding in the window evaluation.
    for n in 0..len / 2 {
        let avg = 0.5 * (taps[n] + taps[len - 1 - n]);
        taps[n] = avg;
        taps[len - 1 - n] = avg;
    }
    Ok(FirFilter {
        taps,
        group_delay: len / 2,
    })
}

/// Sample instants for one chirp, measured from the victim's ramp start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastTimeGrid {
    pub rate: f64,
    pub start: f64,
    pub len: usize,
}

impl FastTimeGrid {
    /// The ADC sampling instants.
    pub fn adc(victim: &ChirpConfig) -> Self {
        Self {
            rate: victim.sample_rate,
            start: victim.adc_start(),
            len: victim.samples_per_chirp,
        }
    }

    /// The oversampled grid covering the ADC window plus `pad` samples of
    /// filter memory on each side.
    pub fn oversampled(victim: &ChirpConfig, pad: usize) -> Self {
        let rate = victim.sample_rate * OVERSAMPLING as f64;
        Self {
            rate,
            start: victim.adc_start() - pad as f64 / rate,
            len: victim.samples_per_chirp * OVERSAMPLING + 2 * pad,
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 / self.rate
    }
}

/// Raised-cosine amplitude gate on instantaneous frequency. Components
/// approaching the grid's Nyquist limit are faded out before they could
/// alias; the AAF removes everything in the faded region anyway.
fn alias_gate(freq: f64, rate: f64) -> f64 {
    let nyq = rate / 2.0;
    let a = freq.abs() / nyq;
    if a <= GATE_START {
        1.0
    } else if a >= GATE_STOP {
        0.0
    } else {
        0.5 * (1.0 + (PI * (a - GATE_START) / (GATE_STOP - GATE_START)).cos())
    }
}

/// Dechirped echo of one target for chirp `chirp_index`: a tone at
/// `f_R + f_D` whose phase advances by `2 pi f_D T` from chirp to chirp.
pub fn synth_echo(
    target: &Target,
    victim: &ChirpConfig,
    chirp_index: usize,
    grid: &FastTimeGrid,
    model: AmplitudeModel,
) -> Vec<Complex64> {
    let f_d = doppler_frequency(target.velocity, victim.start_freq);
    let freq = target.beat_frequency(victim);
    let amp = target.amplitude(model) * alias_gate(freq, grid.rate);
    let range_cycles = (2.0 * target.range * victim.start_freq / SPEED_OF_LIGHT).fract();
    let slow_cycles = (f_d * chirp_index as f64 * victim.chirp_time).fract();
    let phase0 = 2.0 * PI * (range_cycles + slow_cycles);
    (0..grid.len)
        .map(|k| Complex64::from_polar(amp, 2.0 * PI * freq * grid.time(k) + phase0))
        .collect()
}

fn substream(seed: u64, kind: u64, component: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 56) | ((component & 0xFFFF) << 40) | (index & 0xFF_FFFF_FFFF));
    rng
}

/// Random phases of one interferer, drawn from counter-based substreams so
/// any chirp can be synthesized without the others.
#[derive(Debug, Clone, Copy)]
pub struct InterferencePhases {
    pub seed: u64,
    pub interferer: usize,
    pub walk_std: f64,
}

impl InterferencePhases {
    /// Uniform phase of the aggressor's chirp number `segment`.
    pub fn segment(&self, segment: i64) -> f64 {
        let mut rng = substream(self.seed, STREAM_SEGMENT, self.interferer as u64, segment as u64);
        rng.random::<f64>() * 2.0 * PI
    }

    /// Accumulated phase walk at victim chirp `chirp_index`; zero at chirp 0.
    pub fn walk(&self, chirp_index: usize) -> f64 {
        if self.walk_std == 0.0 {
            return 0.0;
        }
        (1..=chirp_index)
            .map(|i| {
                let mut rng = substream(self.seed, STREAM_WALK, self.interferer as u64, i as u64);
                let z: f64 = rng.sample(StandardNormal);
                z * self.walk_std
            })
            .sum()
    }
}

/// Where an aggressor is in its own schedule at victim fast time `t`.
struct AggressorClock {
    delay: f64,
    period: f64,
    active: f64,
    continuous: bool,
}

impl AggressorClock {
    fn new(intf: &Interferer) -> Self {
        Self {
            delay: intf.range / SPEED_OF_LIGHT + intf.timing_offset,
            period: intf.period(),
            active: intf.chirp.chirp_time,
            continuous: intf.chirp.chirp_rate == 0.0,
        }
    }

    /// (segment number, time into that segment's ramp) or `None` while the
    /// aggressor is silent.
    fn locate(&self, t_abs: f64) -> Option<(i64, f64)> {
        let u_raw = t_abs - self.delay;
        if self.continuous {
            return Some((0, u_raw));
        }
        let q = (u_raw / self.period).floor();
        let u = u_raw - q * self.period;
        (u < self.active).then_some((q as i64, u))
    }
}

/// Instantaneous frequency of the dechirped interference at victim fast
/// time `t` in chirp `chirp_index`, or `None` while the aggressor is silent.
pub fn interference_inst_freq(
    intf: &Interferer,
    victim: &ChirpConfig,
    chirp_index: usize,
    t: f64,
) -> Option<f64> {
    let clock = AggressorClock::new(intf);
    let t_abs = chirp_index as f64 * victim.chirp_time + t;
    clock.locate(t_abs).map(|(_, u)| {
        (victim.start_freq + victim.chirp_rate * t) - (intf.chirp.start_freq + intf.chirp.chirp_rate * u)
    })
}

/// Dechirped interference for chirp `chirp_index`: the victim LO minus the
/// aggressor's instantaneous phase, i.e. a quadratic-phase exponential at the
/// chirp-rate difference. Not band-limited apart from the alias gate.
pub fn synth_interference(
    intf: &Interferer,
    victim: &ChirpConfig,
    chirp_index: usize,
    grid: &FastTimeGrid,
    phases: &InterferencePhases,
) -> Vec<Complex64> {
    let clock = AggressorClock::new(intf);
    let t0 = chirp_index as f64 * victim.chirp_time;
    let walk = phases.walk(chirp_index);
    let (fa, mua) = (intf.chirp.start_freq, intf.chirp.chirp_rate);
    let (fv, muv) = (victim.start_freq, victim.chirp_rate);
    let mut cached: Option<(i64, f64)> = None;
    (0..grid.len)
        .map(|k| {
            let t = grid.time(k);
            let Some((q, u)) = clock.locate(t0 + t) else {
                return Complex64::new(0.0, 0.0);
            };
            let theta = match cached {
                Some((cq, th)) if cq == q => th,
                _ => {
                    let th = phases.segment(q);
                    cached = Some((q, th));
                    th
                }
            };
            let inst = (fv + muv * t) - (fa + mua * u);
            let gain = intf.amp * alias_gate(inst, grid.rate);
            if gain == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let victim_cycles = (fv * t).fract() + 0.5 * muv * t * t;
            let aggressor_cycles = (fa * u).fract() + 0.5 * mua * u * u;
            let cycles = (victim_cycles - aggressor_cycles).fract();
            Complex64::from_polar(gain, 2.0 * PI * cycles + theta + walk)
        })
        .collect()
}

/// One CPI of raw ADC data, rows are chirps.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiFrame {
    pub data: Array2<Complex32>,
    pub sample_rate: f64,
    pub scene_digest: [u8; 32],
}

impl CpiFrame {
    pub fn new(data: Array2<Complex32>, sample_rate: f64, scene_digest: [u8; 32]) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::config("frame sample_rate must be > 0"));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("frame samples".into()));
        }
        Ok(Self {
            data,
            sample_rate,
            scene_digest,
        })
    }

    pub fn chirps(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn chirp(&self, i: usize) -> Vec<Complex64> {
        self.data
            .row(i)
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect()
    }
}

fn synth_chirp(scene: &Scene, aaf: &FirFilter, chirp_index: usize) -> Vec<Complex32> {
    let victim = &scene.victim;
    let grid = FastTimeGrid::oversampled(victim, aaf.group_delay);
    let mut x = vec![Complex64::new(0.0, 0.0); grid.len];
    for target in &scene.targets {
        let echo = synth_echo(target, victim, chirp_index, &grid, scene.amplitude_model);
        x.iter_mut().zip(echo).for_each(|(a, b)| *a += b);
    }
    for (idx, intf) in scene.interferers.iter().enumerate() {
        let phases = InterferencePhases {
            seed: scene.seed,
            interferer: idx,
            walk_std: intf.phase_walk_std,
        };
        let s = synth_interference(intf, victim, chirp_index, &grid, &phases);
        x.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }

    let n = victim.samples_per_chirp;
    let sigma = (scene.noise_power / 2.0).sqrt();
    let mut rng = substream(scene.seed, STREAM_NOISE, 0, chirp_index as u64);
    (0..n)
        .map(|m| {
            let window = &x[m * OVERSAMPLING..m * OVERSAMPLING + aaf.taps.len()];
            let mut y: Complex64 = aaf.taps.iter().zip(window).map(|(&h, &s)| s * h).sum();
            if sigma > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                y += Complex64::new(re, im) * sigma;
            }
            Complex32::new(y.re as f32, y.im as f32)
        })
        .collect()
}

/// Synthesizes the full M x N frame for `scene`. Chirps are generated in
/// parallel; the result depends only on the scene.
pub fn synthesize(scene: &Scene) -> Result<CpiFrame> {
    scene.validate()?;
    let victim = &scene.victim;
    let rate = victim.sample_rate * OVERSAMPLING as f64;
    let aaf = design_aaf(victim.lpf_bandwidth, scene.aaf_stopband(), rate)?;
    let rows: Vec<Vec<Complex32>> = (0..victim.chirps_per_cpi)
        .into_par_iter()
        .map(|i| synth_chirp(scene, &aaf, i))
        .collect();
    let (m, n) = (victim.chirps_per_cpi, victim.samples_per_chirp);
    let flat: Vec<Complex32> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((m, n), flat).expect("rows have n samples");
    CpiFrame::new(data, victim.sample_rate, scene.digest())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{table1_scene, table2_scene};

    fn peak_bin(x: &[Complex64]) -> usize {
        let n = x.len();
        let mut best = (0, 0.0);
        for k in 0..n {
            let s: Complex64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * i) as f64 / n as f64))
                .sum();
            if s.norm() > best.1 {
                best = (k, s.norm());
            }
        }
        best.0
    }

    #[test]
    fn aaf_table1_band_edges() {
        let f = design_aaf(10e6, 20e6, 160e6).unwrap();
        assert_eq!(f.taps.len() % 2, 1);
        assert_eq!(f.group_delay, f.taps.len() / 2);
        assert!((f.response(0.0, 160e6).norm() - 1.0).abs() < 0.06);
        for i in 0..=120 {
            let freq = 20e6 + i as f64 * 0.5e6;
            assert!(f.response(freq, 160e6).norm() <= 1e-3, "{freq}");
        }
        for i in 0..=100 {
            let freq = i as f64 * 0.1e6;
            let db = f.magnitude_db(freq, 160e6);
            assert!(db.abs() <= 0.5, "{freq}: {db}");
        }
    }

    #[test]
    fn aaf_is_symmetric() {
        let f = design_aaf(9e6, 18e6, 80e6).unwrap();
        let n = f.taps.len();
        for i in 0..n {
            assert!((f.taps[i] - f.taps[n - 1 - i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn aaf_rejects_bad_edges() {
        assert!(design_aaf(20e6, 10e6, 160e6).is_err());
        assert!(design_aaf(10e6, 10e6, 160e6).is_err());
        assert!(design_aaf(10e6, 90e6, 160e6).is_err());
        assert!(design_aaf(0.0, 10e6, 160e6).is_err());
    }

    #[test]
    fn echo_at_zero_range_is_dc() {
        let victim = table1_scene().victim;
        let grid = FastTimeGrid::adc(&victim);
        let x = synth_echo(&Target::new(0.0, 1.0, 0.0), &victim, 3, &grid, AmplitudeModel::Normalized);
        assert!(x.iter().all(|z| (z - x[0]).norm() < 1e-12));
    }

    #[test]
    fn echo_t1_peaks_at_beat_bin() {
        let victim = table1_scene().victim;
        let grid = FastTimeGrid::adc(&victim);
        let x = synth_echo(&Target::new(35.0, 1.0, 0.0), &victim, 0, &grid, AmplitudeModel::Normalized);
        let expected = victim.beat_bin(crate::waveform::beat_frequency(35.0, victim.chirp_rate)).round() as usize;
        assert_eq!(expected, 70);
        assert!(peak_bin(&x).abs_diff(expected) <= 1);
    }

    #[test]
    fn echo_doppler_progression() {
        let victim = table2_scene().victim;
        let grid = FastTimeGrid::adc(&victim);
        let t = Target::new(15.0, 1.0, 3.0);
        let a = synth_echo(&t, &victim, 4, &grid, AmplitudeModel::Normalized);
        let b = synth_echo(&t, &victim, 5, &grid, AmplitudeModel::Normalized);
        let inner: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let expected = 2.0 * PI * doppler_frequency(3.0, victim.start_freq) * victim.chirp_time;
        let diff = (inner.arg() - expected).rem_euclid(2.0 * PI);
        assert!(diff.min(2.0 * PI - diff) < 1e-6, "{}", inner.arg());
    }

    #[test]
    fn identical_chirps_give_constant_dc() {
        let victim = table2_scene().victim;
        let intf = Interferer {
            chirp: victim,
            range: 0.0,
            amp: 1.0,
            timing_offset: 0.0,
            phase_walk_std: 0.0,
            chirp_period: None,
        };
        let grid = FastTimeGrid::adc(&victim);
        let phases = InterferencePhases {
            seed: 1,
            interferer: 0,
            walk_std: 0.0,
        };
        let x = synth_interference(&intf, &victim, 2, &grid, &phases);
        assert!(x.iter().all(|z| (z - x[0]).norm() < 1e-6 && (z.norm() - 1.0).abs() < 1e-12));
        for k in 0..grid.len {
            let f = interference_inst_freq(&intf, &victim, 2, grid.time(k)).unwrap();
            assert!(f.abs() < 1e-3);
        }
    }

    #[test]
    fn inf1_sweeps_through_band_once() {
        let scene = table1_scene();
        let victim = scene.victim;
        let intf = scene.interferers[0];
        let grid = FastTimeGrid::adc(&victim);
        let mut crossings = 0;
        let mut prev: Option<f64> = None;
        let mut in_band = 0;
        for k in 0..grid.len {
            let f = interference_inst_freq(&intf, &victim, 0, grid.time(k));
            if let (Some(p), Some(f)) = (prev, f) {
                if p.signum() != f.signum() {
                    crossings += 1;
                }
                let rate = (f - p) * grid.rate;
                let expected = victim.chirp_rate - intf.chirp.chirp_rate;
                assert!((rate - expected).abs() / expected.abs() < 1e-6);
            }
            if f.is_some_and(|f| f.abs() < victim.sample_rate / 2.0) {
                in_band += 1;
            }
            prev = f;
        }
        assert_eq!(crossings, 1);
        assert!(in_band > 0);
    }

    #[test]
    fn cw_interferer_is_lfm_at_minus_victim_rate() {
        let scene = table1_scene();
        let victim = scene.victim;
        let intf = scene.interferers[2];
        let f0 = interference_inst_freq(&intf, &victim, 0, 0.0).unwrap();
        assert!((f0 + 100e6).abs() < 1.0);
        let f1 = interference_inst_freq(&intf, &victim, 0, 1e-6).unwrap();
        let slope = (f1 - f0) / 1e-6;
        assert!((slope - victim.chirp_rate).abs() / victim.chirp_rate < 1e-6);
    }

    #[test]
    fn phase_streams_are_counter_based() {
        let p = InterferencePhases {
            seed: 7,
            interferer: 1,
            walk_std: 0.3,
        };
        assert_eq!(p.segment(-3), p.segment(-3));
        assert_ne!(p.segment(0), p.segment(1));
        assert_eq!(p.walk(0), 0.0);
        let q = InterferencePhases { interferer: 2, ..p };
        assert_ne!(p.walk(5), q.walk(5));
    }

    #[test]
    fn empty_scene_is_zero() {
        let scene = Scene {
            noise_power: 0.0,
            ..table2_scene().without_interferers().without_targets()
        };
        let f = synthesize(&scene).unwrap();
        assert_eq!(f.data.dim(), (128, 512));
        assert!(f.data.iter().all(|z| *z == Complex32::new(0.0, 0.0)));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let scene = table2_scene();
        let a = synthesize(&scene).unwrap();
        let b = synthesize(&scene).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&scene.with_seed(3)).unwrap();
        assert_ne!(a.data, c.data);
    }
}
