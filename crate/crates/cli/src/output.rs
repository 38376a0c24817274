//! Artifact files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thinfb::snapshot;
use thinfb::GridField;

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the artifacts of one run and their hashes.
pub struct Output {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<(), CliError> {
        let p = self.path(name);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        self.artifacts.push((name.to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        self.record(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
        s.push('\n');
        self.text(name, &s)
    }

    /// Two-column ladder `r,<column>`.
    pub fn ladder(&mut self, name: &str, column: &str, rows: &[(f64, f64)]) -> Result<(), CliError> {
        let mut s = format!("r,{column}\n");
        for (r, v) in rows {
            s.push_str(&format!("{r:.16e},{v:.16e}\n"));
        }
        self.text(name, &s)
    }

    pub fn snapshot(&mut self, stem: &str, field: &GridField, description: &str) -> Result<(), CliError> {
        snapshot::write(field, &self.path(stem), description)?;
        self.record(&format!("{stem}.f64"))?;
        self.record(&format!("{stem}.json"))
    }

    /// Record every file already written under `sub` (e.g. a coefficient bundle).
    pub fn record_dir(&mut self, sub: &str) -> Result<(), CliError> {
        let dir = self.path(sub);
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| CliError::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for n in names {
            self.record(&format!("{sub}/{n}"))?;
        }
        Ok(())
    }

    /// Write `manifest.json` tying every artifact to the config hash.
    /// The output directory is left out of the hash.
    pub fn finish(self, command: &str, config: &Value) -> Result<PathBuf, CliError> {
        let mut hashed = config.clone();
        if let Some(m) = hashed.as_object_mut() {
            m.remove("out");
        }
        let canonical = serde_json::to_string(&hashed).map_err(CliError::internal)?;
        let manifest = json!({
            "command": command,
            "config": config,
            "config_hash": sha256_hex(canonical.as_bytes()),
            "versions": {
                "thinfb": env!("CARGO_PKG_VERSION"),
                "parallel_build": thinfb::Parallelism::available(),
            },
            "threads": crate::thread_count(),
            "artifacts": self.artifacts.iter().map(|(p, h)| json!({ "path": p, "sha256": h })).collect::<Vec<_>>(),
        });
        let p = self.path("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest).map_err(CliError::internal)?;
        s.push('\n');
        fs::write(&p, s).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }
}
