use std::fs;
use std::path::Path;

use anyhow::Context;
use radar_anc::io::encode_cpi;
use radar_anc::scene::Scene;
use radar_anc::synth::synthesize;

use crate::manifest::{hex, sha256_hex, FrameRecord, Manifest, FRAME};
use crate::usage;

/// Reads a TOML scenario, or the scene recorded in a run manifest when the
/// file is JSON.
fn load_scene(path: &Path) -> anyhow::Result<Scene> {
    if !path.is_file() {
        return Err(usage(format!("{}: scenario file not found", path.display())));
    }
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: not a run manifest: {e}", path.display())))?;
        manifest.scene.validate()?;
        return Ok(manifest.scene);
    }
    Scene::load(path).map_err(|e| usage(e.to_string()))
}

pub fn run(scenario: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let mut scene = load_scene(scenario)?;
    if let Some(seed) = seed {
        scene.seed = seed;
    }
    let frame = synthesize(&scene)?;
    let bytes = encode_cpi(&frame)?;

    fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let frame_path = out.join(FRAME);
    fs::write(&frame_path, &bytes).with_context(|| frame_path.display().to_string())?;
    // A fresh capture invalidates earlier mitigation results.
    for stale in fs::read_dir(out)?.flatten() {
        let name = stale.file_name();
        let name = name.to_string_lossy();
        if name.ends_with(".csv") || name == crate::manifest::SIR || name.starts_with("summary.") {
            fs::remove_file(stale.path())?;
        }
    }

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.to_path_buf(),
        seed: scene.seed,
        scene_digest: hex(&scene.digest()),
        frame: FrameRecord {
            file: FRAME.to_string(),
            sha256: sha256_hex(&bytes),
            chirps: frame.chirps(),
            samples: frame.samples(),
            sample_rate: frame.sample_rate,
        },
        scene,
        mitigation: None,
    };
    manifest.save(out)?;
    println!(
        "{}: {} chirps x {} samples, seed {}, sha256 {}",
        frame_path.display(),
        manifest.frame.chirps,
        manifest.frame.samples,
        manifest.seed,
        manifest.frame.sha256
    );
    Ok(())
}
