//! Self-describing JSON archives and `#`-headed CSV tables.
//!
//! An archive holds the format version, the full run configuration, the
//! payload and a SHA-256 checksum of the payload's serialized bytes. Keys are
//! sorted and floats are written in shortest round-trip form, so saving and
//! loading is bit-exact and identical runs give identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub format_version: u32,
    pub config: RunConfig,
    pub payload: Value,
    pub checksum: String,
}

fn digest(payload: &Value) -> String {
    let bytes = serde_json::to_vec(payload).expect("JSON values always serialize");
    let hash = Sha256::digest(&bytes);
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Archive {
    pub fn new(config: &RunConfig, payload: &impl Serialize) -> CliResult<Self> {
        let payload = serde_json::to_value(payload).map_err(|e| CliError::Usage(format!("payload not serializable: {e}")))?;
        Ok(Self { format_version: FORMAT_VERSION, config: config.clone(), checksum: digest(&payload), payload })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("archives always serialize");
        text.push('\n');
        write_file(path, &text)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |reason: String| CliError::Archive { path: path.to_path_buf(), reason };
        let archive: Archive = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if archive.format_version != FORMAT_VERSION {
            return Err(bad(format!("format version {} is not {FORMAT_VERSION}", archive.format_version)));
        }
        if digest(&archive.payload) != archive.checksum {
            return Err(bad("payload checksum mismatch".into()));
        }
        Ok(archive)
    }

    pub fn payload<T: DeserializeOwned>(&self) -> CliResult<T> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| CliError::Usage(format!("archive of `{}` has an unexpected payload: {e}", self.config.command.name())))
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    // write-then-rename so an interrupted run never leaves a torn file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Comma-separated table with the configuration as a `#` comment header.
pub struct Table {
    columns: Vec<&'static str>,
    body: String,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), body: String::new() }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            let _ = write!(self.body, "{v}");
        }
        self.body.push('\n');
    }

    pub fn render(&self, config: &RunConfig) -> String {
        let header = serde_json::to_string(config).expect("configs always serialize");
        format!(
            "# backflow {} format_version={FORMAT_VERSION}\n# config: {header}\n{}\n{}",
            config.command.name(),
            self.columns.join(","),
            self.body
        )
    }

    pub fn save(&self, path: &Path, config: &RunConfig) -> CliResult<()> {
        write_file(path, &self.render(config))
    }
}

/// Files written by one command, in the order they were produced.
#[derive(Debug, Default, Clone)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn archive(&mut self, dir: &Path, config: &RunConfig, payload: &impl Serialize) -> CliResult<Archive> {
        let archive = Archive::new(config, payload)?;
        let path = dir.join(format!("{}.json", config.command.name()));
        archive.save(&path)?;
        self.files.push(path);
        Ok(archive)
    }

    pub fn table(&mut self, dir: &Path, name: &str, config: &RunConfig, table: &Table) -> CliResult<()> {
        let path = dir.join(format!("{name}.csv"));
        table.save(&path, config)?;
        self.files.push(path);
        Ok(())
    }
}
