//! `manifest.toml`: what ran, with which settings, on which inputs, and
//! what it produced.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::output::OutDir;
use crate::CliResult;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub git_describe: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// sha256 of every input file; directories hash their sorted file list.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of every output file, or `volatile` for timing reports.
    pub outputs: BTreeMap<String, String>,
    /// The effective settings after merging the config file and flags.
    pub config: toml::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git_describe: env!("OBJFIELD_GIT_DESCRIBE").to_string(),
            seed: None,
            threads: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: toml::Value::try_from(config).context("serializing config")?,
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs
            .insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    /// Hashes the outputs and writes the manifest as the last file.
    pub fn finish(mut self, out: &OutDir) -> CliResult<()> {
        for entry in WalkDir::new(out.root()).sort_by_file_name() {
            let entry = entry.context("listing outputs")?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = relative(out.root(), entry.path());
            let digest = if out.is_volatile(&rel) {
                "volatile".to_string()
            } else {
                hash_file(entry.path())?
            };
            self.outputs.insert(rel, digest);
        }
        let text = toml::to_string_pretty(&self).context("serializing manifest")?;
        out.write(MANIFEST, text)?;
        Ok(())
    }
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn hash_file(path: &Path) -> CliResult<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// A file's sha256, or for a directory the sha256 of its
/// `relative-path NUL file-hash LF` lines in sorted order.
pub fn hash_path(path: &Path) -> CliResult<String> {
    if !path.is_dir() {
        return hash_file(path);
    }
    let mut h = Sha256::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.context("listing input directory")?;
        if entry.file_type().is_file() {
            h.update(relative(path, entry.path()).as_bytes());
            h.update([0]);
            h.update(hash_file(entry.path())?.as_bytes());
            h.update(b"\n");
        }
    }
    Ok(hex::encode(h.finalize()))
}
