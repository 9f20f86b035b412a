use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use ndarray::Array2;
use radar_anc::Complex64;
use radar_anc::anc::{auto_threshold, mitigate_cpi, AncParams, Mitigation};
use radar_anc::io::{decode_cpi, export_csv, CsvTable};
use radar_anc::metrics::{mean_sir_1d, sir_2d, CfarWindow, SirReport};
use radar_anc::scene::Scene;
use radar_anc::spectral::{doppler_fft, power_db, range_axis, RangeDopplerMap, Window};
use radar_anc::synth::CpiFrame;
use serde::{Deserialize, Serialize};

use crate::manifest::{sha256_hex, Manifest, MitigationRecord, SIR};
use crate::{usage, UsageError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Noise floor of the reference half plus 10 dB.
    Auto,
    Fixed(f64),
}

impl FromStr for Threshold {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threshold::Auto);
        }
        match s.parse::<f64>() {
            Ok(t) if t.is_finite() && t >= 0.0 => Ok(Threshold::Fixed(t)),
            _ => Err(UsageError(format!("--threshold must be `auto` or a non-negative number, got {s:?}"))),
        }
    }
}

pub struct Options {
    pub gammas: Vec<f64>,
    pub filter_len: usize,
    pub threshold: Threshold,
    pub window: Window,
}

/// Contents of `sir.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SirFile {
    pub window: CfarWindow,
    pub threshold: f64,
    pub runs: Vec<GammaRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaRun {
    pub gamma: f64,
    pub filter_len: usize,
    pub chirps: usize,
    pub applied_chirps: usize,
    pub targets: Vec<TargetSir>,
}

/// SIR of one target before and after cancellation. The 1-D figure is the
/// per-chirp SIR averaged over the CPI; the 2-D reports exist when M > 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSir {
    pub index: usize,
    pub range: f64,
    pub velocity: f64,
    pub range_bin: usize,
    pub before_1d_db: f64,
    pub after_1d_db: f64,
    pub before_2d: Option<SirReport>,
    pub after_2d: Option<SirReport>,
}

pub fn tag(gamma: f64) -> String {
    format!("g{gamma}")
}

fn read_frame(run_dir: &Path, manifest: &Manifest) -> anyhow::Result<CpiFrame> {
    let path = run_dir.join(&manifest.frame.file);
    if !path.is_file() {
        return Err(usage(format!("{}: capture missing", path.display())));
    }
    let bytes = fs::read(&path).with_context(|| path.display().to_string())?;
    if sha256_hex(&bytes) != manifest.frame.sha256 {
        return Err(anyhow!("{}: contents do not match the manifest digest", path.display()));
    }
    decode_cpi(&bytes).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn db_matrix(x: &Array2<Complex64>) -> Array2<f64> {
    x.mapv(power_db)
}

fn write_spectra(path: &Path, scene: &Scene, spectra: &Array2<Complex64>, n_fft: usize) -> anyhow::Result<()> {
    let axis = range_axis(&scene.victim, spectra.ncols(), n_fft);
    let chirps = (0..spectra.nrows()).map(|i| i as f64).collect();
    export_csv(&CsvTable::from_matrix("chirp/range_m", axis, chirps, &db_matrix(spectra))?, path)?;
    Ok(())
}

fn write_map(path: &Path, map: &RangeDopplerMap) -> anyhow::Result<()> {
    let table = CsvTable::from_matrix("velocity_mps/range_m", map.range_axis.clone(), map.doppler_axis.clone(), &map.power_db)?;
    export_csv(&table, path)?;
    Ok(())
}

fn write_traces(path: &Path, m: &Mitigation) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
    w.write_record(["chirp", "applied", "ref_power", "step_size"])?;
    for (i, t) in m.traces.iter().enumerate() {
        w.write_record([
            i.to_string(),
            u8::from(t.applied).to_string(),
            t.power.to_string(),
            t.dw_used.map_or(String::new(), |dw| dw.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn target_sir(
    scene: &Scene,
    m: &Mitigation,
    maps: Option<(&RangeDopplerMap, &RangeDopplerMap)>,
    window: CfarWindow,
) -> anyhow::Result<Vec<TargetSir>> {
    let bins = m.pri.ncols();
    let mut out = Vec::new();
    for (index, t) in scene.targets.iter().enumerate() {
        let bin = scene.victim.beat_bin(t.beat_frequency(&scene.victim)).round();
        if !(bin >= 0.0 && (bin as usize) < bins) {
            eprintln!("warning: target {index} at {} m falls outside the positive range bins; skipped", t.range);
            continue;
        }
        let bin = bin as usize;
        let (before_2d, after_2d) = match maps {
            Some((before, after)) => {
                let row = before.doppler_row(t.velocity);
                (Some(sir_2d(before, bin, row, window)?), Some(sir_2d(after, bin, row, window)?))
            }
            None => (None, None),
        };
        out.push(TargetSir {
            index,
            range: t.range,
            velocity: t.velocity,
            range_bin: bin,
            before_1d_db: mean_sir_1d(&m.pri, bin, window)?,
            after_1d_db: mean_sir_1d(&m.out, bin, window)?,
            before_2d,
            after_2d,
        });
    }
    Ok(out)
}

pub fn run(run_dir: &Path, opts: &Options) -> anyhow::Result<()> {
    if opts.gammas.is_empty() {
        return Err(usage("--sweep-gamma needs at least one value"));
    }
    let mut manifest = Manifest::load(run_dir)?;
    let scene = manifest.scene.clone();
    let frame = read_frame(run_dir, &manifest)?;
    let n_fft = frame.samples();

    let (threshold_mode, threshold) = match opts.threshold {
        Threshold::Auto => ("auto", auto_threshold(&frame, opts.window)?),
        Threshold::Fixed(t) => ("fixed", t),
    };
    let cfar = CfarWindow::default();
    let mut outputs = Vec::new();
    let mut runs = Vec::new();
    let mut before_map: Option<RangeDopplerMap> = None;

    for (k, &gamma) in opts.gammas.iter().enumerate() {
        let params = AncParams {
            filter_len: opts.filter_len,
            threshold,
            gamma,
            ..Default::default()
        };
        let m = mitigate_cpi(&frame, &params, opts.window)?;
        if k == 0 {
            write_spectra(&run_dir.join("pri_db.csv"), &scene, &m.pri, n_fft)?;
            write_spectra(&run_dir.join("ref_db.csv"), &scene, &m.reference, n_fft)?;
            outputs.extend(["pri_db.csv".to_string(), "ref_db.csv".to_string()]);
            if frame.chirps() > 1 {
                let map = doppler_fft(&m.pri, &scene.victim)?;
                write_map(&run_dir.join("rd_before.csv"), &map)?;
                outputs.push("rd_before.csv".into());
                before_map = Some(map);
            }
        }
        let g = tag(gamma);
        let name = format!("mitigated_{g}.csv");
        write_spectra(&run_dir.join(&name), &scene, &m.out, n_fft)?;
        outputs.push(name);
        let name = format!("traces_{g}.csv");
        write_traces(&run_dir.join(&name), &m)?;
        outputs.push(name);

        let after_map = match &before_map {
            Some(_) => {
                let map = doppler_fft(&m.out, &scene.victim)?;
                let name = format!("rd_after_{g}.csv");
                write_map(&run_dir.join(&name), &map)?;
                outputs.push(name);
                Some(map)
            }
            None => None,
        };
        let maps = before_map.as_ref().zip(after_map.as_ref());
        let targets = target_sir(&scene, &m, maps, cfar)?;
        println!(
            "gamma {gamma}: ANC applied on {}/{} chirps (threshold {threshold:.6e})",
            m.applied_count(),
            frame.chirps()
        );
        for t in &targets {
            println!(
                "  target {} ({} m): SIR {:.2} -> {:.2} dB",
                t.index, t.range, t.before_1d_db, t.after_1d_db
            );
        }
        runs.push(GammaRun {
            gamma,
            filter_len: opts.filter_len,
            chirps: frame.chirps(),
            applied_chirps: m.applied_count(),
            targets,
        });
    }

    let sir = SirFile {
        window: cfar,
        threshold,
        runs,
    };
    let sir_path = run_dir.join(SIR);
    fs::write(&sir_path, serde_json::to_string_pretty(&sir)? + "\n").with_context(|| sir_path.display().to_string())?;
    outputs.push(SIR.into());

    manifest.mitigation = Some(MitigationRecord {
        filter_len: opts.filter_len,
        gammas: opts.gammas.clone(),
        threshold_mode: threshold_mode.into(),
        threshold,
        window: opts.window,
        outputs,
    });
    manifest.save(run_dir)
}

pub fn load_sir(run_dir: &Path) -> anyhow::Result<SirFile> {
    let path = run_dir.join(SIR);
    if !path.is_file() {
        return Err(usage(format!("{}: no SIR results (run `mitigate` first)", path.display())));
    }
    let text = fs::read_to_string(&path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed SIR results", path.display()))
}
