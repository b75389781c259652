//! Run reports and hash-stamped CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// One named invariant or acceptance check with its observed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `observed <= threshold`.
    pub fn at_most(name: &str, observed: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), observed, threshold, passed: observed <= threshold, detail: detail.into() }
    }

    /// Passes when `observed >= threshold`.
    pub fn at_least(name: &str, observed: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), observed, threshold, passed: observed >= threshold, detail: detail.into() }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        let v = if passed { 1.0 } else { 0.0 };
        Check { name: name.into(), observed: v, threshold: 1.0, passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub commands: Vec<String>,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(command: &str, config_hash: &str, seeds: &[u64]) -> Self {
        RunReport {
            commands: vec![command.to_string()],
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: seeds.to_vec(),
            metrics: BTreeMap::new(),
            notes: BTreeMap::new(),
            checks: Vec::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.insert(key.into(), value.into());
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// Folds `other` into this report. Reports from different configs are
    /// refused.
    pub fn merge(&mut self, other: RunReport) -> Result<()> {
        if other.config_hash != self.config_hash {
            bail!("cannot merge reports with config hashes {} and {}", self.config_hash, other.config_hash);
        }
        self.commands.extend(other.commands);
        for (k, v) in other.metrics {
            self.metrics.insert(k, v);
        }
        for (k, v) in other.notes {
            self.notes.insert(k, v);
        }
        self.checks.extend(other.checks);
        self.outputs.extend(other.outputs);
        self.wall_clock_s += other.wall_clock_s;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// CSV with a `# config_hash=` first line.
pub fn write_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// The hash recorded on the first line of a CSV written by [`write_csv`].
pub fn csv_hash(path: &Path) -> Result<Option<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().next().and_then(|l| l.strip_prefix("# config_hash=")).map(str::to_string))
}

pub fn num(v: f64) -> String {
    format!("{v}")
}
