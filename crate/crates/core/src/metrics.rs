//! SIR measurement around known target cells, noise-floor estimation,
//! ghost-target probability and an STFT for time-frequency inspection.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{spectrum_db, RangeDopplerMap, Window};

/// Reference and guard cells around the cell under test, as totals split
/// evenly between the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfarWindow {
    pub ref_cells: usize,
    pub guard_cells: usize,
}

impl Default for CfarWindow {
    fn default() -> Self {
        Self {
            ref_cells: 20,
            guard_cells: 6,
        }
    }
}

impl CfarWindow {
    pub fn per_side(ref_cells: usize, guard_cells: usize) -> Self {
        Self {
            ref_cells: 2 * ref_cells,
            guard_cells: 2 * guard_cells,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ref_cells == 0 {
            return Err(Error::config("CFAR window needs reference cells"));
        }
        if self.ref_cells % 2 != 0 || self.guard_cells % 2 != 0 {
            return Err(Error::config("CFAR cell totals must split evenly between sides"));
        }
        Ok(())
    }

    fn ref_side(&self) -> usize {
        self.ref_cells / 2
    }

    fn guard_side(&self) -> usize {
        self.guard_cells / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirReport {
    /// One index for spectra, `[range, doppler]` for maps.
    pub target_bin: Vec<usize>,
    pub peak_db: f64,
    pub floor_db: f64,
    pub sir_db: f64,
    pub window: CfarWindow,
}

impl SirReport {
    fn new(target_bin: Vec<usize>, peak_db: f64, floor_db: f64, window: CfarWindow) -> Self {
        Self {
            target_bin,
            peak_db,
            floor_db,
            sir_db: peak_db - floor_db,
            window,
        }
    }
}

fn mean_db(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), db| (s + 10f64.powf(db / 10.0), n + 1));
    (n > 0).then(|| 10.0 * (sum / n as f64).log10())
}

/// Peak within one bin of `target_bin` over the mean linear power of the
/// reference cells. Cells past either edge are dropped.
pub fn sir_1d(spectrum_db: &[f64], target_bin: usize, window: CfarWindow) -> Result<SirReport> {
    window.validate()?;
    let n = spectrum_db.len();
    if target_bin >= n {
        return Err(Error::Dimension(format!("target bin {target_bin} outside spectrum of {n}")));
    }
    let lo = target_bin.saturating_sub(1);
    let hi = (target_bin + 1).min(n - 1);
    let peak = spectrum_db[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (g, r) = (window.guard_side() as isize, window.ref_side() as isize);
    let t = target_bin as isize;
    let cells = (g + 1..=g + r)
        .flat_map(|d| [t - d, t + d])
        .filter(|&i| i >= 0 && (i as usize) < n)
        .map(|i| spectrum_db[i as usize]);
    let floor = mean_db(cells).ok_or_else(|| Error::Dimension("no reference cells inside the spectrum".into()))?;
    Ok(SirReport::new(vec![target_bin], peak, floor, window))
}

/// Two-dimensional analogue of [`sir_1d`] on a range-Doppler map: the peak
/// is searched over the 3x3 neighbourhood and the floor is the rectangular
/// ring of reference cells outside the guard region, in both dimensions.
pub fn sir_2d(map: &RangeDopplerMap, range_bin: usize, doppler_bin: usize, window: CfarWindow) -> Result<SirReport> {
    window.validate()?;
    let (rows, cols) = map.power_db.dim();
    if range_bin >= cols || doppler_bin >= rows {
        return Err(Error::Dimension(format!(
            "cell ({range_bin}, {doppler_bin}) outside {cols} x {rows} map"
        )));
    }
    let p = &map.power_db;
    let mut peak = f64::NEG_INFINITY;
    for r in doppler_bin.saturating_sub(1)..=(doppler_bin + 1).min(rows - 1) {
        for c in range_bin.saturating_sub(1)..=(range_bin + 1).min(cols - 1) {
            peak = peak.max(p[[r, c]]);
        }
    }
    let g = window.guard_side() as isize;
    let outer = g + window.ref_side() as isize;
    let (d0, r0) = (doppler_bin as isize, range_bin as isize);
    let mut cells = Vec::new();
    for dr in -outer..=outer {
        for dc in -outer..=outer {
            if dr.abs() <= g && dc.abs() <= g {
                continue;
            }
            let (r, c) = (d0 + dr, r0 + dc);
            if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
                cells.push(p[[r as usize, c as usize]]);
            }
        }
    }
    let floor =
        mean_db(cells.into_iter()).ok_or_else(|| Error::Dimension("no reference cells inside the map".into()))?;
    Ok(SirReport::new(vec![range_bin, doppler_bin], peak, floor, window))
}

/// 1-D SIR at `target_bin` averaged (in dB) over the rows of a
/// chirps x bins spectrum matrix.
pub fn mean_sir_1d(rows: &Array2<Complex64>, target_bin: usize, window: CfarWindow) -> Result<f64> {
    if rows.nrows() == 0 {
        return Err(Error::Dimension("no chirps to average".into()));
    }
    let mut total = 0.0;
    for row in rows.rows() {
        total += sir_1d(&spectrum_db(&row.to_vec()), target_bin, window)?.sir_db;
    }
    Ok(total / rows.nrows() as f64)
}

/// Median of per-bin dB values.
pub fn noise_floor(spectrum_db: &[f64]) -> Result<f64> {
    if spectrum_db.is_empty() {
        return Err(Error::Dimension("noise floor of an empty spectrum".into()));
    }
    if spectrum_db.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("spectrum".into()));
    }
    let mut v = spectrum_db.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Chance that an identical-parameter aggressor's difference frequency lands
/// inside the victim's AAF band, `bw_lpf / bw`.
pub fn ghost_probability(bw_lpf: f64, bw: f64) -> Result<f64> {
    if !(bw.is_finite() && bw > 0.0 && bw_lpf.is_finite() && bw_lpf >= 0.0 && bw_lpf <= bw) {
        return Err(Error::config(format!("ghost probability needs 0 <= bw_lpf ({bw_lpf}) <= bw ({bw})")));
    }
    Ok(bw_lpf / bw)
}

/// Hann-windowed STFT magnitude. Rows are frames, columns frequency bins
/// ordered from -rate/2 up to just below +rate/2.
pub fn stft(samples: &[Complex64], win_len: usize, hop: usize) -> Result<Array2<f64>> {
    if win_len == 0 || hop == 0 {
        return Err(Error::config("STFT window and hop must be > 0"));
    }
    if win_len > samples.len() {
        return Err(Error::Dimension(format!(
            "STFT window {win_len} longer than {} samples",
            samples.len()
        )));
    }
    let frames = (samples.len() - win_len) / hop + 1;
    let w = Window::Hann.coefficients(win_len);
    let fft = FftPlanner::new().plan_fft_forward(win_len);
    let mut out = Array2::zeros((frames, win_len));
    let mut buf = vec![Complex64::new(0.0, 0.0); win_len];
    for f in 0..frames {
        let seg = &samples[f * hop..f * hop + win_len];
        for ((b, &s), &c) in buf.iter_mut().zip(seg).zip(&w) {
            *b = s * c;
        }
        fft.process(&mut buf);
        for k in 0..win_len {
            out[[f, k]] = buf[(k + win_len / 2) % win_len].norm();
        }
    }
    Ok(out)
}

/// Frequency of each STFT column.
pub fn stft_frequencies(win_len: usize, rate: f64) -> Vec<f64> {
    (0..win_len)
        .map(|k| (k as f64 - (win_len / 2) as f64) * rate / win_len as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sir_of_delta_over_flat_floor() {
        let mut s = vec![-20.0; 64];
        s[30] = 0.0;
        let r = sir_1d(&s, 30, CfarWindow::default()).unwrap();
        assert!((r.sir_db - 20.0).abs() < 1e-9);
        assert_eq!(r.sir_db, r.peak_db - r.floor_db);
    }

    #[test]
    fn sir_of_flat_spectrum_is_zero() {
        let r = sir_1d(&[3.0; 40], 20, CfarWindow::default()).unwrap();
        assert!(r.sir_db.abs() < 1e-9);
    }

    #[test]
    fn sir_peak_search_and_guards() {
        let mut s = vec![-30.0; 64];
        s[31] = 5.0;
        // Inside the guard cells: must not touch the floor.
        s[27] = 10.0;
        s[33] = 10.0;
        let r = sir_1d(&s, 30, CfarWindow::default()).unwrap();
        assert_eq!(r.peak_db, 5.0);
        assert!((r.floor_db + 30.0).abs() < 1e-9);
    }

    #[test]
    fn sir_clips_at_edges() {
        let mut s = vec![-10.0; 20];
        s[0] = 0.0;
        let r = sir_1d(&s, 0, CfarWindow::default()).unwrap();
        assert!((r.sir_db - 10.0).abs() < 1e-9);
        assert!(sir_1d(&s, 20, CfarWindow::default()).is_err());
        assert!(sir_1d(&[0.0; 3], 1, CfarWindow::default()).is_err());
    }

    #[test]
    fn cfar_window_validation() {
        assert!(CfarWindow { ref_cells: 0, guard_cells: 2 }.validate().is_err());
        assert!(CfarWindow { ref_cells: 5, guard_cells: 2 }.validate().is_err());
        assert_eq!(CfarWindow::per_side(10, 3), CfarWindow::default());
    }

    fn flat_map(v: f64) -> RangeDopplerMap {
        RangeDopplerMap {
            power_db: Array2::from_elem((32, 40), v),
            range_axis: (0..40).map(|i| i as f64).collect(),
            doppler_axis: (0..32).map(|i| i as f64 - 16.0).collect(),
        }
    }

    #[test]
    fn sir_2d_cases() {
        let r = sir_2d(&flat_map(-7.0), 20, 16, CfarWindow::default()).unwrap();
        assert!(r.sir_db.abs() < 1e-9);
        let mut m = flat_map(-25.0);
        m.power_db[[16, 20]] = 5.0;
        let r = sir_2d(&m, 20, 16, CfarWindow::default()).unwrap();
        assert!((r.sir_db - 30.0).abs() < 1e-9);
        assert_eq!(r.target_bin, vec![20, 16]);
        assert!(sir_2d(&m, 40, 0, CfarWindow::default()).is_err());
    }

    #[test]
    fn noise_floor_cases() {
        assert!((noise_floor(&[-16.1; 9]).unwrap() + 16.1).abs() < 1e-12);
        let mut v = vec![-20.0; 11];
        v[4] = 20.0;
        assert_eq!(noise_floor(&v).unwrap(), -20.0);
        assert_eq!(noise_floor(&[1.0, 3.0]).unwrap(), 2.0);
        assert!(noise_floor(&[]).is_err());
    }

    #[test]
    fn ghost_probability_cases() {
        assert_eq!(ghost_probability(9e6, 750e6).unwrap(), 0.012);
        assert_eq!(ghost_probability(750e6, 750e6).unwrap(), 1.0);
        assert_eq!(ghost_probability(0.0, 750e6).unwrap(), 0.0);
        assert!(ghost_probability(800e6, 750e6).is_err());
        assert!(ghost_probability(1.0, 0.0).is_err());
    }

    #[test]
    fn stft_of_tone_and_zeros() {
        let n = 256;
        let x: Vec<_> = (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * 0.125 * i as f64)).collect();
        let s = stft(&x, 32, 16).unwrap();
        assert_eq!(s.dim(), (15, 32));
        for row in s.rows() {
            let best = (0..32).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(best, 16 + 4);
        }
        let z = stft(&vec![Complex64::new(0.0, 0.0); 64], 16, 8).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(stft(&x, 512, 1).is_err());
    }

    #[test]
    fn stft_ridge_follows_lfm() {
        let rate = 1.0;
        let n = 4096;
        let r = 0.8 / n as f64;
        let x: Vec<_> = (0..n)
            .map(|i| {
                let t = i as f64;
                Complex64::from_polar(1.0, 2.0 * PI * (-0.4 * t + 0.5 * r * t * t))
            })
            .collect();
        let (win, hop) = (64, 64);
        let s = stft(&x, win, hop).unwrap();
        let freqs = stft_frequencies(win, rate);
        let bin_hz = rate / win as f64;
        for (f, row) in s.rows().into_iter().enumerate() {
            let best = (0..win).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            let centre = (f * hop) as f64 + win as f64 / 2.0;
            let expected = -0.4 + r * centre;
            assert!((freqs[best] - expected).abs() <= bin_hz, "frame {f}");
        }
    }
}
