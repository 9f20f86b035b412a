//! `manifest.json`: everything needed to regenerate a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use radar_anc::scene::Scene;
use radar_anc::spectral::Window;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::usage;

pub const MANIFEST: &str = "manifest.json";
pub const FRAME: &str = "frame.ranc";
pub const SIR: &str = "sir.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    /// Scenario file as given on the command line.
    pub scenario: PathBuf,
    pub seed: u64,
    /// Effective scene, seed override applied.
    pub scene: Scene,
    pub scene_digest: String,
    pub frame: FrameRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<MitigationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub file: String,
    pub sha256: String,
    pub chirps: usize,
    pub samples: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationRecord {
    pub filter_len: usize,
    pub gammas: Vec<f64>,
    /// `"auto"` or `"fixed"`.
    pub threshold_mode: String,
    /// Resolved gate level on sum |ref|^2.
    pub threshold: f64,
    pub window: Window,
    pub outputs: Vec<String>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl Manifest {
    pub fn load(run_dir: &Path) -> anyhow::Result<Manifest> {
        let path = run_dir.join(MANIFEST);
        if !path.is_file() {
            return Err(usage(format!("{}: no run manifest (run `simulate` first)", path.display())));
        }
        let text = fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        serde_json::from_str(&text).with_context(|| format!("{}: malformed manifest", path.display()))
    }

    pub fn save(&self, run_dir: &Path) -> anyhow::Result<()> {
        let path = run_dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| path.display().to_string())
    }
}
