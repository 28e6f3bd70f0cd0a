//! Result persistence: CSV tables with fixed headers, JSON run summaries,
//! and the per-trial record dumps the summary statistics are recomputable
//! from.
//!
//! Floats are written in Rust's shortest round-trip form, so a rerun with the
//! same config and seed produces byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::config::ScenarioConfig;
use super::trial::TrialRecord;

/// Write `header` + `rows` as `<dir>/<name>.csv`, creating the directory.
pub fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Write any serializable table as `<dir>/<name>.json`.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.json"));
    let mut file = std::fs::File::create(&path)?;
    let text = serde_json::to_string_pretty(value)?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(path)
}

/// Per-trial record dump for one labelled cell.
pub fn write_trial_records(
    dir: &Path,
    name: &str,
    cells: &[(String, &[TrialRecord])],
) -> Result<PathBuf> {
    let header = format!("cell,{}", TrialRecord::CSV_HEADER);
    let mut rows = Vec::new();
    for (cell, records) in cells {
        for r in *records {
            rows.push(format!("{cell},{}", r.to_csv_row()));
        }
    }
    write_csv(dir, name, &header, &rows)
}

/// Headline metadata for one experiment run. The wall time lives only here,
/// never in the CSV tables, so tables stay reproducible byte for byte.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub wall_secs: f64,
    pub headline: serde_json::Value,
}

impl RunSummary {
    pub fn new(experiment: &str, cfg: &ScenarioConfig, wall_secs: f64, headline: serde_json::Value) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_hash: format!("{:016x}", cfg.config_hash()),
            master_seed: cfg.master_seed,
            wall_secs,
            headline,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write_json(dir, &format!("{}_summary", self.experiment), self)
    }
}
