use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use geoview::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

/// Provenance record kept in every output directory. It is the only file
/// there that carries timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub wall_time_s: Option<f64>,
    pub status: RunStatus,
    pub error: Option<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Open manifest for a command in progress.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestWriter {
    /// Create the output directory and write the manifest before any work.
    pub fn start(out: &Path, command: &str, config_hash: String, seed: u64, inputs: Vec<PathBuf>) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let w = ManifestWriter {
            path: out.join(MANIFEST_NAME),
            manifest: RunManifest {
                command: command.to_string(),
                config_hash,
                seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                inputs,
                outputs: Vec::new(),
                started_at: now(),
                finished_at: None,
                wall_time_s: None,
                status: RunStatus::Running,
                error: None,
            },
            clock: Instant::now(),
        };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&self.path, json).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self, outcome: &Result<Vec<PathBuf>>) -> Result<()> {
        self.manifest.finished_at = Some(now());
        self.manifest.wall_time_s = Some(self.clock.elapsed().as_secs_f64());
        match outcome {
            Ok(outputs) => {
                self.manifest.outputs = outputs.clone();
                self.manifest.status = RunStatus::Succeeded;
            }
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(e.to_string());
            }
        }
        self.write()
    }
}
