//! LMS adaptive noise canceller running over range bins.
//!
//! For each chirp the positive half of the range spectrum is the primary
//! input and the conjugate-flipped negative half is the reference. Taps
//! start at `(1, 0, ..., 0)` so a perfectly symmetric interference spectrum
//! is cancelled before any adaptation.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::noise_floor;
use crate::spectral::{interference_power, spectrum_db, split, RangeFft, Window};
use crate::synth::CpiFrame;

/// How the error and filter input are conjugated in the tap update. The
/// filter output is `w^T f` under both rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// `w += dw * conj(f) * eps`, the gradient of `|eps|^2` for `w^T f`.
    #[default]
    ConjugateInput,
    /// `w += dw * f * conj(eps)`. Only a descent direction when the data
    /// are real.
    ConjugateError,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::ConjugateInput => "conjugate-input",
            UpdateRule::ConjugateError => "conjugate-error",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conjugate-input" => Ok(UpdateRule::ConjugateInput),
            "conjugate-error" => Ok(UpdateRule::ConjugateError),
            _ => Err(Error::config(format!("unknown update rule '{s}'"))),
        }
    }
}

/// Which power the step size `2 / (gamma * P)` is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPower {
    /// Mean reference power per bin, `sum |ref|^2 / (N/2)`.
    #[default]
    PerBin,
    /// The summed reference power used for gating.
    Total,
}

impl fmt::Display for StepPower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepPower::PerBin => "per-bin",
            StepPower::Total => "total",
        })
    }
}

impl FromStr for StepPower {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-bin" => Ok(StepPower::PerBin),
            "total" => Ok(StepPower::Total),
            _ => Err(Error::config(format!("unknown step power '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AncParams {
    pub filter_len: usize,
    /// Gate on `sum |ref|^2 > threshold`.
    pub threshold: f64,
    pub gamma: f64,
    /// Fixed step size used instead of `2 / (gamma * P)`.
    #[serde(default)]
    pub dw_override: Option<f64>,
    #[serde(default)]
    pub update_rule: UpdateRule,
    #[serde(default)]
    pub step_power: StepPower,
    /// Keep `|eps[k]|^2` for every iteration in the traces.
    #[serde(default)]
    pub record_error: bool,
}

impl Default for AncParams {
    fn default() -> Self {
        Self {
            filter_len: 8,
            threshold: 0.0,
            gamma: 100.0,
            dw_override: None,
            update_rule: UpdateRule::default(),
            step_power: StepPower::default(),
            record_error: false,
        }
    }
}

impl AncParams {
    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 {
            return Err(Error::config("filter_len must be >= 1"));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::config(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::config(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        if let Some(dw) = self.dw_override {
            if !(dw.is_finite() && dw > 0.0) {
                return Err(Error::config(format!("step size override must be > 0, got {dw}")));
            }
        }
        Ok(())
    }
}

/// Per-chirp diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AncTrace {
    pub taps_final: Vec<Complex64>,
    pub applied: bool,
    /// `sum |ref|^2` for the chirp.
    pub power: f64,
    pub dw_used: Option<f64>,
    pub error_power_by_iter: Option<Vec<f64>>,
}

/// `2 / (gamma * power)`.
pub fn step_size(power: f64, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::config(format!("gamma must be > 1, got {gamma}")));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::Misuse(format!(
            "step size requested for reference power {power}; the gate should have bypassed"
        )));
    }
    Ok(2.0 / (gamma * power))
}

/// Streaming LMS state.
#[derive(Debug, Clone)]
pub struct LmsCanceller {
    taps: Vec<Complex64>,
    input: Vec<Complex64>,
    dw: f64,
    rule: UpdateRule,
}

impl LmsCanceller {
    pub fn new(filter_len: usize, dw: f64, rule: UpdateRule) -> Result<Self> {
        if filter_len == 0 {
            return Err(Error::config("filter_len must be >= 1"));
        }
        if !(dw.is_finite() && dw > 0.0) {
            return Err(Error::config(format!("step size must be > 0, got {dw}")));
        }
        let mut taps = vec![Complex64::new(0.0, 0.0); filter_len];
        taps[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            taps,
            input: vec![Complex64::new(0.0, 0.0); filter_len],
            dw,
            rule,
        })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Consumes one (primary, reference) pair and returns the error sample.
    #[inline]
    pub fn step(&mut self, pri: Complex64, reference: Complex64) -> Complex64 {
        self.input.rotate_right(1);
        self.input[0] = reference;
        let estimate: Complex64 = self.taps.iter().zip(&self.input).map(|(w, f)| w * f).sum();
        let eps = pri - estimate;
        match self.rule {
            UpdateRule::ConjugateInput => {
                let g = eps * self.dw;
                for (w, f) in self.taps.iter_mut().zip(&self.input) {
                    *w += f.conj() * g;
                }
            }
            UpdateRule::ConjugateError => {
                let g = eps.conj() * self.dw;
                for (w, f) in self.taps.iter_mut().zip(&self.input) {
                    *w += f * g;
                }
            }
        }
        eps
    }
}

fn check_finite(name: &str, x: &[Complex64]) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

/// Runs the canceller over a whole sequence with the default update rule.
/// Returns the error sequence (the cleaned primary) and the final taps.
pub fn lms_cancel(
    pri: &[Complex64],
    reference: &[Complex64],
    filter_len: usize,
    dw: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    lms_cancel_with(pri, reference, filter_len, dw, UpdateRule::default())
}

pub fn lms_cancel_with(
    pri: &[Complex64],
    reference: &[Complex64],
    filter_len: usize,
    dw: f64,
    rule: UpdateRule,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if pri.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "primary has {} samples, reference {}",
            pri.len(),
            reference.len()
        )));
    }
    if filter_len > pri.len() {
        return Err(Error::Dimension(format!(
            "filter length {filter_len} exceeds sequence length {}",
            pri.len()
        )));
    }
    check_finite("primary", pri)?;
    check_finite("reference", reference)?;
    let mut lms = LmsCanceller::new(filter_len, dw, rule)?;
    let eps = pri.iter().zip(reference).map(|(&p, &r)| lms.step(p, r)).collect();
    Ok((eps, lms.taps))
}

/// Result of running the canceller over a frame. Matrices are
/// chirps x (N/2) range bins.
#[derive(Debug, Clone)]
pub struct Mitigation {
    pub pri: Array2<Complex64>,
    pub reference: Array2<Complex64>,
    pub out: Array2<Complex64>,
    pub traces: Vec<AncTrace>,
}

impl Mitigation {
    pub fn applied_count(&self) -> usize {
        self.traces.iter().filter(|t| t.applied).count()
    }
}

struct ChirpResult {
    pri: Vec<Complex64>,
    reference: Vec<Complex64>,
    out: Vec<Complex64>,
    trace: AncTrace,
}

fn mitigate_chirp(fft: &RangeFft, samples: &[Complex64], params: &AncParams) -> Result<ChirpResult> {
    let spectrum = fft.process(samples)?;
    let s = split(&spectrum)?;
    let power = interference_power(&s.reference);
    let applied = power > params.threshold;
    if !applied {
        return Ok(ChirpResult {
            out: s.pri.clone(),
            trace: AncTrace {
                taps_final: Vec::new(),
                applied,
                power,
                dw_used: None,
                error_power_by_iter: None,
            },
            pri: s.pri,
            reference: s.reference,
        });
    }
    let dw = match params.dw_override {
        Some(dw) => dw,
        None => {
            let p = match params.step_power {
                StepPower::Total => power,
                StepPower::PerBin => power / s.reference.len() as f64,
            };
            step_size(p, params.gamma)?
        }
    };
    let (out, taps) = lms_cancel_with(&s.pri, &s.reference, params.filter_len, dw, params.update_rule)?;
    let error_power_by_iter = params
        .record_error
        .then(|| out.iter().map(|z| z.norm_sqr()).collect());
    Ok(ChirpResult {
        pri: s.pri,
        reference: s.reference,
        out,
        trace: AncTrace {
            taps_final: taps,
            applied,
            power,
            dw_used: Some(dw),
            error_power_by_iter,
        },
    })
}

fn stack(rows: &[Vec<Complex64>]) -> Array2<Complex64> {
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}

/// Range FFT, split, gate and cancel every chirp of `frame`. Taps and step
/// size are reset per chirp, so chirps are processed in parallel.
pub fn mitigate_cpi(frame: &CpiFrame, params: &AncParams, window: Window) -> Result<Mitigation> {
    params.validate()?;
    let n = frame.samples();
    let fft = RangeFft::new(n, window)?;
    if params.filter_len > n / 2 {
        return Err(Error::config(format!(
            "filter length {} exceeds the {} positive range bins",
            params.filter_len,
            n / 2
        )));
    }
    let results: Vec<ChirpResult> = (0..frame.chirps())
        .into_par_iter()
        .map(|i| mitigate_chirp(&fft, &frame.chirp(i), params))
        .collect::<Result<_>>()?;
    let pri: Vec<_> = results.iter().map(|r| r.pri.clone()).collect();
    let reference: Vec<_> = results.iter().map(|r| r.reference.clone()).collect();
    let out: Vec<_> = results.iter().map(|r| r.out.clone()).collect();
    Ok(Mitigation {
        pri: stack(&pri),
        reference: stack(&reference),
        out: stack(&out),
        traces: results.into_iter().map(|r| r.trace).collect(),
    })
}

/// Gating threshold 10 dB above the quietest chirp's reference noise floor,
/// expressed as a summed power comparable with `interference_power`.
pub fn auto_threshold(frame: &CpiFrame, window: Window) -> Result<f64> {
    let fft = RangeFft::new(frame.samples(), window)?;
    let mut quietest = f64::INFINITY;
    for i in 0..frame.chirps() {
        let s = split(&fft.process(&frame.chirp(i))?)?;
        quietest = quietest.min(noise_floor(&spectrum_db(&s.reference))?);
    }
    if !quietest.is_finite() {
        return Err(Error::Dimension("frame has no chirps".into()));
    }
    let bins = (frame.samples() / 2) as f64;
    Ok(bins * 10f64.powf((quietest + 10.0) / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex32;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn step_size_examples() {
        assert_eq!(step_size(1.0, 2.0).unwrap(), 1.0);
        let p = 10f64.powf(2.2);
        assert!((step_size(p, 100.0).unwrap() - 1.262e-4).abs() < 1e-6);
        assert!(step_size(1.0, 1.0).is_err());
        assert!(matches!(step_size(0.0, 100.0), Err(Error::Misuse(_))));
    }

    #[test]
    fn scalar_recurrence() {
        for rule in [UpdateRule::ConjugateInput, UpdateRule::ConjugateError] {
            let (eps, taps) = lms_cancel_with(&[c(2.0), c(2.0)], &[c(1.0), c(1.0)], 1, 0.5, rule).unwrap();
            assert_eq!(eps, vec![c(1.0), c(0.5)]);
            assert_eq!(taps, vec![c(1.75)]);
        }
    }

    #[test]
    fn identical_inputs_cancel_exactly() {
        let x: Vec<_> = (0..64).map(|i| Complex64::from_polar(1.0 + i as f64, 0.3 * i as f64)).collect();
        let (eps, taps) = lms_cancel(&x, &x, 4, 0.01).unwrap();
        assert!(eps.iter().all(|e| e.norm() == 0.0));
        assert_eq!(taps[0], c(1.0));
        assert!(taps[1..].iter().all(|t| t.norm() == 0.0));
    }

    #[test]
    fn zero_reference_passes_primary() {
        let x: Vec<_> = (0..16).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let (eps, taps) = lms_cancel(&x, &[c(0.0); 16], 3, 0.1).unwrap();
        assert_eq!(eps, x);
        assert_eq!(taps, vec![c(1.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn lms_rejects_bad_inputs() {
        assert!(matches!(lms_cancel(&[c(1.0); 4], &[c(1.0); 3], 1, 0.1), Err(Error::Dimension(_))));
        assert!(lms_cancel(&[c(1.0); 2], &[c(1.0); 2], 3, 0.1).is_err());
        assert!(matches!(
            lms_cancel(&[c(f64::NAN); 2], &[c(1.0); 2], 1, 0.1),
            Err(Error::NonFinite(_))
        ));
        assert!(lms_cancel(&[c(1.0); 2], &[c(1.0); 2], 1, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        AncParams::default().validate().unwrap();
        assert!(AncParams { gamma: 1.0, ..Default::default() }.validate().is_err());
        assert!(AncParams { filter_len: 0, ..Default::default() }.validate().is_err());
        assert!(AncParams { threshold: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn clean_frame_is_bypassed() {
        let data = Array2::from_shape_fn((4, 32), |(_, n)| {
            let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 5.0 * n as f64 / 32.0);
            Complex32::new(z.re as f32, z.im as f32)
        });
        let frame = CpiFrame::new(data, 1e6, [0; 32]).unwrap();
        let params = AncParams {
            threshold: 1e-3,
            filter_len: 2,
            ..Default::default()
        };
        let m = mitigate_cpi(&frame, &params, Window::Rect).unwrap();
        assert_eq!(m.applied_count(), 0);
        assert_eq!(m.out, m.pri);
        assert!(m.traces.iter().all(|t| t.dw_used.is_none()));
    }

    #[test]
    fn gate_matches_power() {
        let data = Array2::from_shape_fn((6, 16), |(i, n)| Complex32::new((i * n) as f32 * 0.1, 0.0));
        let frame = CpiFrame::new(data, 1e6, [0; 32]).unwrap();
        let params = AncParams {
            threshold: 5.0,
            filter_len: 2,
            ..Default::default()
        };
        let m = mitigate_cpi(&frame, &params, Window::Rect).unwrap();
        for (i, t) in m.traces.iter().enumerate() {
            let p = interference_power(&m.reference.row(i).to_vec());
            assert_eq!(t.applied, p > 5.0);
            assert_eq!(t.power, p);
        }
    }
}
