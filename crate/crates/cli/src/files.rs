//! On-disk formats: observations, vectors, traces and manifests.

use std::collections::BTreeMap;
use std::path::Path;

use grainfield::sampler::Acceptance;
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, RunConfig};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

#[derive(Serialize, Deserialize)]
struct Observation {
    element_id: usize,
    value: f64,
}

/// CSV `element_id,value` with 0-based element ids, one row per element.
pub fn observations_csv(values: &[f64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (element_id, &value) in values.iter().enumerate() {
        w.serialize(Observation { element_id, value }).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Parse observations; every element must appear exactly once.
pub fn read_observations(path: &Path, n_elements: usize) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => io_err(path, &e),
        _ => bad(e.to_string()),
    })?;
    let mut out = vec![None; n_elements];
    for rec in r.deserialize::<Observation>() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let slot = out
            .get_mut(rec.element_id)
            .ok_or_else(|| bad(format!("element_id {} outside 0..{n_elements}", rec.element_id)))?;
        if slot.replace(rec.value).is_some() {
            return Err(bad(format!("element_id {} appears twice", rec.element_id)));
        }
        if !rec.value.is_finite() {
            return Err(bad(format!("element_id {} has a non-finite value", rec.element_id)));
        }
    }
    out.iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| bad(format!("no value for element_id {i}"))))
        .collect()
}

/// Header row and numeric rows of a CSV table.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let corrupt = |m: String| CliError::Io(format!("{}: corrupt table: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| corrupt(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| corrupt(e.to_string()))?;
        let row = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| corrupt(format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Rates per Metropolis update; `None` where nothing was attempted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub df: Option<f64>,
    pub counts: Acceptance,
}

impl From<&Acceptance> for Rates {
    fn from(a: &Acceptance) -> Self {
        let r = |p: (u64, u64)| (p.1 > 0).then(|| Acceptance::rate(p));
        Self {
            beta: r(a.beta),
            gamma: r(a.gamma),
            df: r(a.df),
            counts: *a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub sha256: String,
    /// Data rows, header excluded, for tables.
    pub rows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub files: BTreeMap<String, FileRecord>,
    pub acceptance: BTreeMap<String, Rates>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed,
            threads: cfg.threads,
            files: BTreeMap::new(),
            acceptance: BTreeMap::new(),
            timings: BTreeMap::new(),
            config: cfg.clone(),
        }
    }

    /// Write `bytes` into `dir` and record its digest.
    pub fn add(&mut self, dir: &Path, name: &str, bytes: &[u8], rows: Option<usize>) -> Result<(), CliError> {
        write_file(dir, name, bytes)?;
        self.files.insert(
            name.to_string(),
            FileRecord {
                sha256: sha256_hex(bytes),
                rows,
            },
        );
        Ok(())
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(dir, name, text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    /// Check that every recorded file is present and unchanged.
    pub fn verify(&self, dir: &Path) -> Result<(), CliError> {
        for (name, rec) in &self.files {
            let path = dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            if sha256_hex(&bytes) != rec.sha256 {
                let lines = bytes.iter().filter(|&&b| b == b'\n').count();
                let detail = match rec.rows {
                    Some(r) if lines < r + 1 => format!("truncated: {} of {r} rows", lines.saturating_sub(1)),
                    _ => "contents differ from the manifest digest".to_string(),
                };
                return Err(CliError::Io(format!("integrity check failed for {}: {detail}", path.display())));
            }
        }
        Ok(())
    }
}
