//! The write-once output directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::{usage, CliResult};

/// Fails unless `path` is absent or an empty directory.
pub fn check_fresh(path: &Path) -> CliResult<()> {
    if !path.exists() {
        return Ok(());
    }
    let empty = path.is_dir()
        && std::fs::read_dir(path)
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
    if empty {
        Ok(())
    } else {
        Err(usage(format!(
            "--out {} already exists and is not empty; outputs are write-once",
            path.display()
        )))
    }
}

/// A fresh output directory. Files inside are created once and never
/// overwritten.
pub struct OutDir {
    root: PathBuf,
    /// Outputs whose content legitimately differs between runs; they are
    /// listed in the manifest without a hash.
    volatile: Vec<String>,
}

impl OutDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        check_fresh(path)?;
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            root: path.to_path_buf(),
            volatile: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of a new file `name`; fails if it already exists.
    pub fn fresh(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.root.join(name);
        if p.exists() {
            return Err(anyhow::anyhow!("refusing to overwrite {}", p.display()).into());
        }
        Ok(p)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.root.join(name);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&p)
            .with_context(|| format!("creating {}", p.display()))?;
        f.write_all(bytes.as_ref())?;
        Ok(p)
    }

    pub fn mark_volatile(&mut self, name: &str) {
        self.volatile.push(name.to_string());
    }

    pub fn is_volatile(&self, name: &str) -> bool {
        self.volatile.iter().any(|v| v == name)
    }
}
