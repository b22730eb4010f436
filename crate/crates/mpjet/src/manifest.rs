//! Run manifests: resolved settings plus SHA-256 digests of every file a
//! command read or wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

/// Everything needed to reproduce one command. Wall times are kept out of
/// the manifest so that identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<&'static str, String>,
    /// File name to digest.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub results: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: BTreeMap<&'static str, String>) -> Self {
        Self { command: command.into(), version: env!("CARGO_PKG_VERSION").into(), seed, config, ..Self::default() }
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.into(), sha256_hex(bytes));
    }

    pub fn output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.into(), sha256_hex(bytes));
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.insert(key.into(), value.to_string());
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let mut section = |name: &str, entries: &mut dyn Iterator<Item = (&str, &str)>| {
            let _ = writeln!(s, "\n[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
        };
        section("config", &mut self.config.iter().map(|(k, v)| (*k, v.as_str())));
        section("inputs", &mut self.inputs.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        section("outputs", &mut self.outputs.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        section("results", &mut self.results.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        s
    }

    /// Writes `<dir>/<command>.manifest`.
    pub fn write(&self, dir: &Path) -> AppResult<()> {
        write_atomic(&dir.join(format!("{}.manifest", self.command)), self.render().as_bytes())
    }
}

/// Per-stage wall times, written next to the manifest as `<command>.timings`.
#[derive(Debug, Default)]
pub struct Timings(Vec<(String, f64)>);

impl Timings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.0.push((stage.into(), seconds));
    }

    pub fn write(&self, dir: &Path, command: &str) -> AppResult<()> {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k} = {v:.6}");
        }
        write_atomic(&dir.join(format!("{command}.timings")), s.as_bytes())
    }
}
