//! Stage directories with manifests that bind each artifact to the config
//! hash and code version that produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use netvol::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::file_hash;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub code_version: String,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Freshness {
    Fresh,
    Missing,
    Stale(String),
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.dir(stage).join(file)
    }

    pub fn manifest(&self, stage: &str) -> Result<Option<Manifest>> {
        let path = self.path(stage, MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }

    /// Compares the stored manifest with `config_hash`, the running code
    /// version and the current file contents.
    pub fn freshness(&self, stage: &str, config_hash: &str) -> Result<Freshness> {
        let Some(m) = self.manifest(stage)? else {
            return Ok(Freshness::Missing);
        };
        if m.config_hash != config_hash {
            return Ok(Freshness::Stale("config hash changed".into()));
        }
        if m.code_version != CODE_VERSION {
            return Ok(Freshness::Stale(format!("built by version {}", m.code_version)));
        }
        for (name, hash) in &m.files {
            let path = self.path(stage, name);
            if !path.exists() {
                return Ok(Freshness::Stale(format!("{name} is missing")));
            }
            if &file_hash(&path)? != hash {
                return Ok(Freshness::Stale(format!("{name} was modified")));
            }
        }
        Ok(Freshness::Fresh)
    }

    /// Empties the stage directory so a half-written stage is never mistaken
    /// for a finished one.
    pub fn reset(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    /// Records every file currently in the stage directory.
    pub fn commit(&self, stage: &str, config_hash: &str) -> Result<Manifest> {
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(self.dir(stage))? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST && entry.file_type()?.is_file() {
                files.insert(name, file_hash(&entry.path())?);
            }
        }
        let m = Manifest {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            code_version: CODE_VERSION.to_string(),
            files,
        };
        write_json(&self.path(stage, MANIFEST), &m)?;
        info!("{stage}: wrote {} files", m.files.len());
        Ok(m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_tracks_hash_version_and_contents() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::new(tmp.path());
        assert_eq!(ws.freshness("graphs", "abc").unwrap(), Freshness::Missing);
        let dir = ws.reset("graphs").unwrap();
        fs::write(dir.join("a.csv"), "u,v\n").unwrap();
        ws.commit("graphs", "abc").unwrap();
        assert_eq!(ws.freshness("graphs", "abc").unwrap(), Freshness::Fresh);
        assert!(matches!(ws.freshness("graphs", "abd").unwrap(), Freshness::Stale(_)));
        fs::write(dir.join("a.csv"), "u,v\n0,1\n").unwrap();
        assert!(matches!(ws.freshness("graphs", "abc").unwrap(), Freshness::Stale(_)));
    }
}
