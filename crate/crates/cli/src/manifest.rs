use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use annulus_core::io::write_json;
use serde::Serialize;
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{usage, CliError};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub created: String,
    /// `SOURCE_DATE_EPOCH` or `clock`.
    pub created_from: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes =
        fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn timestamp() -> (String, String) {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| OffsetDateTime::from_unix_timestamp(s).ok());
    let (t, from) = match epoch {
        Some(t) => (t, "SOURCE_DATE_EPOCH"),
        None => (OffsetDateTime::now_utc(), "clock"),
    };
    let text = t
        .format(&Rfc3339)
        .unwrap_or_else(|_| t.unix_timestamp().to_string());
    (text, from.to_string())
}

impl RunManifest {
    pub fn new() -> Self {
        let (created, created_from) = timestamp();
        let mut command = vec!["annulus".to_string()];
        command.extend(std::env::args().skip(1));
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config_sha256: None,
            inputs: Vec::new(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            created,
            created_from,
        }
    }

    pub fn config(&mut self, path: Option<&Path>) -> Result<&mut Self, CliError> {
        if let Some(p) = path {
            self.config_sha256 = Some(sha256_file(p)?);
        }
        Ok(self)
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    pub fn inputs<'a>(
        &mut self,
        paths: impl IntoIterator<Item = &'a PathBuf>,
    ) -> Result<&mut Self, CliError> {
        for p in paths {
            self.input(p)?;
        }
        Ok(self)
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes the manifest for a single output file as `<file>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf, CliError> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        write_json(self, &path)?;
        Ok(path)
    }

    /// Writes the manifest of a command that fills a directory.
    pub fn write_in(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        write_json(self, &path)?;
        Ok(path)
    }
}
