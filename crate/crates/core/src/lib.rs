//! Simulation of FMCW automotive-radar mutual interference at complex
//! baseband, and its mitigation with an LMS adaptive noise canceller that
//! uses the negative half of the range spectrum as the interference
//! reference.
//!
//! The usual pipeline is [`scene::Scene`] → [`synth::synthesize`] →
//! [`anc::mitigate_cpi`] → [`metrics::sir_1d`] / [`spectral::doppler_fft`].

pub mod anc;
pub mod error;
pub mod io;
pub mod metrics;
pub mod scene;
pub mod spectral;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::{Complex32, Complex64};
