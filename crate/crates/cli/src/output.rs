//! Artifact writing confined to one output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use tempfile::NamedTempFile;

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves a plain relative file name under the root.
    pub fn path(&self, name: &str) -> Result<PathBuf> {
        let rel = Path::new(name);
        if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            bail!("output name {name:?} escapes the output directory");
        }
        Ok(self.root.join(rel))
    }

    /// Writes `bytes` to a temporary file and renames it into place, so a
    /// failed run never leaves a partial file behind.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let dest = self.path(name)?;
        let mut tmp = NamedTempFile::new_in(&self.root).context("creating temporary file")?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&dest)
            .with_context(|| format!("renaming into {}", dest.display()))?;
        Ok(dest)
    }
}

/// Two-column whitespace-separated series, one point per line.
pub fn plot_data(title: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("# {title}\n");
    for (x, y) in points {
        writeln!(s, "{x} {y}").expect("writing to a String");
    }
    s
}
