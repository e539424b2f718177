use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// Everything needed to rerun a command, written next to its outputs.
#[derive(Serialize)]
pub struct RunManifest<'a, O: Serialize> {
    pub command: &'a str,
    pub inputs: Vec<PathBuf>,
    pub method: Option<String>,
    pub grid: Option<String>,
    pub options: O,
    pub out: &'a Path,
    pub version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl<'a, O: Serialize> RunManifest<'a, O> {
    pub fn new(command: &'a str, inputs: Vec<PathBuf>, options: O, out: &'a Path) -> Self {
        RunManifest {
            command,
            inputs,
            method: None,
            grid: None,
            options,
            out,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn write(&self) -> Result<()> {
        write_json(&self.out.join("manifest.json"), self)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Resolves `path` against the directory holding `config`.
pub fn relative_to(config: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    config.parent().map_or_else(|| path.to_path_buf(), |d| d.join(path))
}

pub fn read_problem(path: &Path) -> Result<ocpkit::ocp::Ocp> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model = ocpkit::ocp::parse_problem(&text).with_context(|| format!("{}", path.display()))?;
    model.freeze().with_context(|| format!("{}", path.display()))
}
