//! Run directories and their manifests.
//!
//! A run directory is `<out>/<command>-<id>`, where `id` is the first 12 hex
//! digits of the SHA-256 of the manifest without its output list. Identical
//! inputs therefore land in the same directory with identical contents.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rgat::config::ModelConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
    pub inputs: Vec<InputDigest>,
    pub options: serde_json::Value,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))?
        .read_to_end(&mut bytes)?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Digests of every regular file under `dir`, sorted by path.
pub fn digest_dir(dir: &Path) -> Result<Vec<InputDigest>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.sort();
    names.iter().filter(|p| p.is_file()).map(|p| digest_file(p)).collect()
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: Option<ModelConfig>, inputs: Vec<InputDigest>, options: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
            options,
            outputs: Vec::new(),
        }
    }

    pub fn run_id(&self) -> String {
        let bare = RunManifest {
            outputs: Vec::new(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&bare).expect("manifest serialises");
        sha256_hex(&bytes)[..12].to_string()
    }
}

/// An open run directory that records what is written into it.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn create(out: &Path, manifest: RunManifest) -> Result<Self> {
        let dir = out.join(format!("{}-{}", manifest.command, manifest.run_id()));
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Run { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for an output, recorded in the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.output(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.output(name);
        let mut w = BufWriter::new(File::create(&path)?);
        for r in rows {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `manifest.json` and returns the run directory.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.outputs.sort();
        let path = self.dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &self.manifest)?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.dir)
    }
}
