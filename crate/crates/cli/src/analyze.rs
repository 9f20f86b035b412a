use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use radar_anc::metrics::ghost_probability;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::mitigate::load_sir;
use crate::usage;

/// Published single-chirp ΔSIR per target (dB) for the stock scenarios.
const PUBLISHED_DELTA_SIR: &[(&str, &[f64])] = &[("table1", &[6.89, 6.18])];

#[derive(Debug, Serialize)]
struct Summary {
    scenario: String,
    seed: u64,
    scene_digest: String,
    ghost_probability: f64,
    threshold: f64,
    threshold_mode: String,
    runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    gamma: f64,
    filter_len: usize,
    chirps: usize,
    applied_chirps: usize,
    bypassed_chirps: usize,
    targets: Vec<TargetSummary>,
}

#[derive(Debug, Serialize)]
struct TargetSummary {
    index: usize,
    range: f64,
    sir_before_db: f64,
    sir_after_db: f64,
    delta_sir_db: f64,
    sir_2d_before_db: Option<f64>,
    sir_2d_after_db: Option<f64>,
    delta_sir_2d_db: Option<f64>,
    published_delta_sir_db: Option<f64>,
}

pub fn run(run_dir: &Path) -> anyhow::Result<()> {
    if !run_dir.is_dir() {
        return Err(usage(format!("{}: run directory not found", run_dir.display())));
    }
    let manifest = Manifest::load(run_dir)?;
    let sir = load_sir(run_dir)?;
    let scene = &manifest.scene;
    let published = PUBLISHED_DELTA_SIR
        .iter()
        .find(|(name, _)| *name == scene.name)
        .map(|(_, v)| *v);

    let runs = sir
        .runs
        .iter()
        .map(|r| RunSummary {
            gamma: r.gamma,
            filter_len: r.filter_len,
            chirps: r.chirps,
            applied_chirps: r.applied_chirps,
            bypassed_chirps: r.chirps - r.applied_chirps,
            targets: r
                .targets
                .iter()
                .map(|t| {
                    let before_2d = t.before_2d.as_ref().map(|s| s.sir_db);
                    let after_2d = t.after_2d.as_ref().map(|s| s.sir_db);
                    TargetSummary {
                        index: t.index,
                        range: t.range,
                        sir_before_db: t.before_1d_db,
                        sir_after_db: t.after_1d_db,
                        delta_sir_db: t.after_1d_db - t.before_1d_db,
                        sir_2d_before_db: before_2d,
                        sir_2d_after_db: after_2d,
                        delta_sir_2d_db: before_2d.zip(after_2d).map(|(b, a)| a - b),
                        published_delta_sir_db: published.and_then(|p| p.get(t.index).copied()),
                    }
                })
                .collect(),
        })
        .collect();

    let mitigation = manifest.mitigation.as_ref();
    let summary = Summary {
        scenario: scene.name.clone(),
        seed: manifest.seed,
        scene_digest: manifest.scene_digest.clone(),
        ghost_probability: ghost_probability(scene.victim.lpf_bandwidth, scene.victim.bandwidth)?,
        threshold: sir.threshold,
        threshold_mode: mitigation.map_or("unknown".into(), |m| m.threshold_mode.clone()),
        runs,
    };

    let text = render(&summary);
    let json_path = run_dir.join("summary.json");
    fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n").with_context(|| json_path.display().to_string())?;
    let text_path = run_dir.join("summary.txt");
    fs::write(&text_path, &text).with_context(|| text_path.display().to_string())?;
    print!("{text}");
    Ok(())
}

fn render(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} (seed {}, digest {})", s.scenario, s.seed, &s.scene_digest[..16]);
    let _ = writeln!(out, "ghost-target probability {:.2} %", 100.0 * s.ghost_probability);
    let _ = writeln!(out, "gate threshold {:.6e} ({})", s.threshold, s.threshold_mode);
    for r in &s.runs {
        let _ = writeln!(
            out,
            "gamma {} L {}: ANC applied {}/{} chirps, bypassed {}",
            r.gamma, r.filter_len, r.applied_chirps, r.chirps, r.bypassed_chirps
        );
        for t in &r.targets {
            let _ = write!(
                out,
                "  T{} {:>7.2} m  SIR {:6.2} -> {:6.2} dB  dSIR {:+6.2} dB",
                t.index + 1,
                t.range,
                t.sir_before_db,
                t.sir_after_db,
                t.delta_sir_db
            );
            if let (Some(b), Some(a), Some(d)) = (t.sir_2d_before_db, t.sir_2d_after_db, t.delta_sir_2d_db) {
                let _ = write!(out, "  | 2-D {b:6.2} -> {a:6.2} dB  dSIR {d:+6.2} dB");
            }
            if let Some(p) = t.published_delta_sir_db {
                let _ = write!(out, "  (published dSIR {p:+.2} dB)");
            }
            out.push('\n');
        }
    }
    out
}
