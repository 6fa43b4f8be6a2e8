//! Output directories: an exclusive lock per run directory, artifacts staged
//! in a scratch directory, and a manifest written last when the staged
//! directory replaces the previous result.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_sha256: String,
    /// Artifact name to SHA-256, sorted by name.
    pub artifacts: BTreeMap<String, String>,
}

/// Held for the lifetime of a run; removes the lock file on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        let path = out.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Io(std::io::Error::new(
                e.kind(),
                format!("output directory {} is locked by another run ({})", out.display(), path.display()),
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Artifacts of one subcommand, staged under `<out>/.<name>.partial` and
/// moved to `<out>/<name>` by [`Stage::commit`].
#[derive(Debug)]
pub struct Stage {
    root: PathBuf,
    name: String,
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl Stage {
    pub fn new(out: &Path, name: &str) -> Result<Self> {
        let dir = out.join(format!(".{name}.partial"));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Stage {
            root: out.to_path_buf(),
            name: name.to_string(),
            dir,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(file), bytes)?;
        self.artifacts.insert(file.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(file, &bytes)
    }

    /// Records a file that was written directly into the stage directory.
    pub fn register(&mut self, file: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(file))?;
        self.artifacts.insert(file.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes the manifest and swaps the staged directory into place.
    pub fn commit(mut self, seed: u64, config_sha256: &str) -> Result<PathBuf> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.name.clone(),
            seed,
            config_sha256: config_sha256.into(),
            artifacts: std::mem::take(&mut self.artifacts),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join(MANIFEST), bytes)?;
        let target = self.root.join(&self.name);
        if target.exists() {
            let old = self.root.join(format!(".{}.old", self.name));
            if old.exists() {
                fs::remove_dir_all(&old)?;
            }
            fs::rename(&target, &old)?;
            fs::rename(&self.dir, &target)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&self.dir, &target)?;
        }
        Ok(target)
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        let e = RunLock::acquire(dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn abandoned_stage_leaves_committed_result() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Stage::new(dir.path(), "simulate").unwrap();
        s.write("a.csv", b"x\n1\n").unwrap();
        let target = s.commit(3, "h").unwrap();
        let m = read_manifest(&target).unwrap();
        assert_eq!(m.artifacts["a.csv"], sha256_hex(b"x\n1\n"));
        let mut s = Stage::new(dir.path(), "simulate").unwrap();
        s.write("a.csv", b"broken").unwrap();
        drop(s);
        assert_eq!(read_manifest(&target).unwrap(), m);
        assert_eq!(fs::read(target.join("a.csv")).unwrap(), b"x\n1\n");
    }
}
