//! Output directory with a hash manifest. Artifacts are write-once: a rerun
//! that produces identical bytes is verified against the manifest, anything
//! else is refused.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SUBDIRS: [&str; 4] = ["models", "explanations", "reports", "logs"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Stage name to the hash of the config that produced it.
    pub stages: BTreeMap<String, String>,
    /// Relative path to artifact record.
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub stage: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Written,
    Verified,
}

pub struct ArtifactStore {
    root: PathBuf,
    manifest: Manifest,
    lock: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ArtifactStore {
    /// Creates the layout if needed and takes the directory lock.
    pub fn open(root: &Path) -> anyhow::Result<ArtifactStore> {
        for sub in SUBDIRS {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        let lock = root.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is locked by another process (remove {} if stale)", root.display(), lock.display())
            }
            Err(e) => return Err(e).context("creating lock file"),
        }
        let path = root.join("manifest.json");
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            Manifest::default()
        };
        Ok(ArtifactStore {
            root: root.to_path_buf(),
            manifest,
            lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Refuses a stage previously run under a different config.
    pub fn begin_stage(&mut self, stage: &str, config_hash: &str) -> anyhow::Result<()> {
        match self.manifest.stages.get(stage) {
            Some(h) if h != config_hash => Err(anyhow!(
                "stage `{stage}` in {} was produced by config {h}, refusing to overwrite with {config_hash}",
                self.root.display()
            )),
            _ => {
                self.manifest.stages.insert(stage.to_string(), config_hash.to_string());
                Ok(())
            }
        }
    }

    pub fn stage_hash(&self, stage: &str) -> Option<&str> {
        self.manifest.stages.get(stage).map(String::as_str)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8], stage: &str) -> anyhow::Result<WriteOutcome> {
        let hash = sha256_hex(bytes);
        let config_hash = self
            .manifest
            .stages
            .get(stage)
            .cloned()
            .ok_or_else(|| anyhow!("stage `{stage}` not started"))?;
        let target = self.root.join(rel);
        if let Some(rec) = self.manifest.artifacts.get(rel) {
            let on_disk = fs::read(&target).with_context(|| format!("{rel} is in the manifest but unreadable"))?;
            if sha256_hex(&on_disk) != rec.sha256 {
                bail!("{rel} was modified after it was recorded");
            }
            if rec.sha256 != hash {
                bail!("{rel} already exists with different contents (sha256 {}), refusing to overwrite", rec.sha256);
            }
            log::info!("verified {rel}");
            return Ok(WriteOutcome::Verified);
        }
        if target.exists() {
            bail!("{} exists but is not in the manifest, refusing to overwrite", target.display());
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, bytes).with_context(|| format!("writing {}", target.display()))?;
        self.manifest.artifacts.insert(
            rel.to_string(),
            ArtifactRecord {
                sha256: hash,
                stage: stage.to_string(),
                config_hash,
            },
        );
        self.save_manifest()?;
        log::info!("wrote {rel}");
        Ok(WriteOutcome::Written)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T, stage: &str) -> anyhow::Result<WriteOutcome> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes, stage)
    }

    /// Reads an artifact, checking it against its recorded hash.
    pub fn read(&self, rel: &str) -> anyhow::Result<Vec<u8>> {
        let rec = self
            .manifest
            .artifacts
            .get(rel)
            .ok_or_else(|| anyhow!("{rel} missing from {}; run the producing stage first", self.root.display()))?;
        let bytes = fs::read(self.root.join(rel)).with_context(|| format!("reading {rel}"))?;
        if sha256_hex(&bytes) != rec.sha256 {
            bail!("{rel} does not match its manifest hash");
        }
        Ok(bytes)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> anyhow::Result<T> {
        serde_json::from_slice(&self.read(rel)?).with_context(|| format!("parsing {rel}"))
    }

    fn save_manifest(&self) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        let tmp = self.root.join("manifest.json.tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(())
    }

    /// Persists stage records even when a stage wrote nothing new.
    pub fn finish(&self) -> anyhow::Result<()> {
        self.save_manifest()
    }
}

impl Drop for ArtifactStore {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::open(dir.path()).unwrap();
        store.begin_stage("s", "h1").unwrap();
        assert_eq!(store.write("reports/a.txt", b"one", "s").unwrap(), WriteOutcome::Written);
        assert_eq!(store.write("reports/a.txt", b"one", "s").unwrap(), WriteOutcome::Verified);
        assert!(store.write("reports/a.txt", b"two", "s").is_err());
        assert!(store.begin_stage("s", "h2").is_err());
        assert_eq!(store.read("reports/a.txt").unwrap(), b"one");
        assert!(ArtifactStore::open(dir.path()).is_err(), "second opener must see the lock");
        drop(store);

        let store = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(store.manifest().artifacts.len(), 1);
        fs::write(dir.path().join("reports/a.txt"), b"tampered").unwrap();
        assert!(store.read("reports/a.txt").is_err());
    }
}
