//! Run manifest: enough provenance to reproduce every emitted number.
//! Each artifact records the (module, operation) pair that produced it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use vlasolve_core::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    /// `module::operation` that produced the numbers in this artifact.
    pub producer: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: String,
    /// Fully resolved configuration snapshot.
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactRecord>,
    pub step_count: usize,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(
        subcommand: &str,
        seed: u64,
        threads: usize,
        out_dir: &Path,
        config: BTreeMap<String, String>,
    ) -> Self {
        Self {
            manifest: RunManifest {
                tool: "vlasolve".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                subcommand: subcommand.into(),
                seed,
                threads,
                out_dir: out_dir.display().to_string(),
                config,
                artifacts: Vec::new(),
                step_count: 0,
                wall_clock_s: 0.0,
                warnings: Vec::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn artifact(&mut self, path: &Path, producer: &str) {
        self.manifest.artifacts.push(ArtifactRecord {
            path: path.display().to_string(),
            producer: producer.into(),
        });
    }

    pub fn warnings(&mut self, warnings: &[String]) {
        self.manifest.warnings.extend_from_slice(warnings);
    }

    pub fn steps(&mut self, n: usize) {
        self.manifest.step_count = n;
    }

    /// Write `manifest.json`; the manifest carries wall-clock timing and is
    /// therefore the one artifact excluded from byte-determinism checks.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| vlasolve_core::Error::Format(e.to_string()))?;
        std::fs::write(&path, json)?;
        Ok(path)
    }
}
