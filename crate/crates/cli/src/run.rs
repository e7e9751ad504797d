//! Run directories: one fresh directory per command invocation, guarded by a
//! lock file in the output directory, closed by a write-once manifest.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, Kind};

pub const LOCK_FILE: &str = ".eapred.lock";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Toolchain {
    pub package: String,
    pub rustc: String,
    pub parallel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    /// Digest of the dataset store the run read or wrote, if any.
    pub dataset_digest: Option<String>,
    /// Prior artifacts this run consumed, with their checksums.
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub started_at: String,
    pub finished_at: String,
    pub toolchain: Toolchain,
}

pub fn sha256_file(path: &Path) -> CliResult<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| CliError::new(Kind::Input, format!("{}: {e}", path.display())))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn other(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(Kind::Other, format!("{}: {e}", path.display()))
}

pub struct RunDir {
    pub path: PathBuf,
    lock: PathBuf,
    command: String,
    config_digest: String,
    started_at: String,
    pub dataset_digest: Option<String>,
    inputs: Vec<Artifact>,
    artifacts: Vec<Artifact>,
}

impl RunDir {
    /// Locks `cfg.output_dir` and creates `<command>-<digest12>-<timestamp>`
    /// inside it. Fails rather than reuse an existing directory.
    pub fn create(command: &str, cfg: &RunConfig) -> CliResult<Self> {
        let out = &cfg.output_dir;
        fs::create_dir_all(out).map_err(|e| other(out, e))?;
        let lock = out.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::new(
                    Kind::Other,
                    format!("{} is locked by another run (remove {} if no run is active)", out.display(), lock.display()),
                )
            } else {
                other(&lock, e)
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        let now = Utc::now();
        let digest = cfg.digest();
        let name = format!("{command}-{}-{}", &digest[..12], now.format("%Y%m%dT%H%M%S%.3fZ"));
        let path = out.join(name);
        if let Err(e) = fs::create_dir(&path) {
            let _ = fs::remove_file(&lock);
            return Err(other(&path, e));
        }
        let mut run = Self {
            path,
            lock,
            command: command.to_string(),
            config_digest: digest,
            started_at: now.to_rfc3339_opts(SecondsFormat::Millis, true),
            dataset_digest: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        };
        run.write(CONFIG_FILE, cfg.to_toml().as_bytes())?;
        Ok(run)
    }

    /// Writes a new file inside the run directory and records it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| other(parent, e))?;
        }
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| other(&path, e))?;
        f.write_all(bytes).map_err(|e| other(&path, e))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Records a file that was written into the run directory by other code.
    pub fn record(&mut self, rel: &str) -> CliResult<()> {
        let (sha256, bytes) = sha256_file(&self.path.join(rel))?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Opens a file for incremental writes (e.g. a log); call
    /// [`RunDir::record`] once it is complete.
    pub fn create_file(&self, rel: &str) -> CliResult<File> {
        let path = self.path.join(rel);
        OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| other(&path, e))
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.inputs.push(Artifact {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    /// Writes the manifest (read-only) and releases the lock.
    pub fn finish(mut self) -> CliResult<PathBuf> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: self.command.clone(),
            config_digest: self.config_digest.clone(),
            dataset_digest: self.dataset_digest.clone(),
            inputs: self.inputs.clone(),
            artifacts: self.artifacts.clone(),
            started_at: self.started_at.clone(),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            toolchain: Toolchain {
                package: format!("eapred {}", env!("CARGO_PKG_VERSION")),
                rustc: env!("EAPRED_RUSTC_VERSION").to_string(),
                parallel: cfg!(feature = "parallel"),
            },
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifests serialize") + "\n";
        let path = self.path.join(MANIFEST_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| other(&path, e))?;
        f.write_all(json.as_bytes()).map_err(|e| other(&path, e))?;
        let mut perms = f.metadata().map_err(|e| other(&path, e))?.permissions();
        perms.set_readonly(true);
        fs::set_permissions(&path, perms).map_err(|e| other(&path, e))?;
        Ok(self.path.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
