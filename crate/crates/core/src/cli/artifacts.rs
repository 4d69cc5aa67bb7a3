//! Output-directory plumbing: the writer lock, the run manifest and CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::synmotion::Normalization;

pub const LOCK_FILE: &str = ".tcdtrack.lock";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Error::io(
                &path,
                io::Error::new(
                    io::ErrorKind::AlreadyExists,
                    "output directory is in use by another run (delete the lock file if it is stale)",
                ),
            )),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationRecord {
    pub sequence: String,
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn new(sequence: impl Into<String>, n: &Normalization) -> Self {
        NormalizationRecord {
            sequence: sequence.into(),
            center: n.center,
            scale: n.scale,
        }
    }
}

/// Written as `run_manifest.json` next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Per-sequence ingestion transform: `normalized = (raw − center) · scale`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub normalizations: Vec<NormalizationRecord>,
    /// The only field that varies between identical runs.
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).expect("config serialises"),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            normalizations: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Writes a CSV with a header row; values use shortest round-trip formatting.
pub fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut text = String::new();
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let _ = writeln!(text, "{}", row.join(","));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends rows to an existing CSV, or creates it with `header`.
pub fn append_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    use std::io::Write;
    let exists = path.is_file();
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if !exists {
        text.push_str(header);
        text.push('\n');
    }
    for row in rows {
        let _ = writeln!(text, "{}", row.join(","));
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
