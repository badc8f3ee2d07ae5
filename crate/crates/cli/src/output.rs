//! Artifact files, written through a temporary file and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<String>) -> Self {
        Artifact {
            name: name.into(),
            contents: contents.into(),
        }
    }
}

/// Writes every artifact into `dir`, creating it if needed. Each file
/// appears atomically or not at all.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    // stage everything first so a failure leaves the directory untouched
    let staged = artifacts
        .iter()
        .map(|a| {
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(a.contents.as_bytes())?;
            tmp.as_file().sync_all()?;
            Ok((tmp, dir.join(&a.name)))
        })
        .collect::<std::io::Result<Vec<_>>>()?;
    staged
        .into_iter()
        .map(|(tmp, path)| {
            tmp.persist(&path).map_err(|e| e.error)?;
            Ok(path)
        })
        .collect()
}
