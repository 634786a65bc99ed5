use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::CliResult;

/// Everything one command run produced, plus what is needed to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub command: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub wall_clock_s: f64,
    /// Same rows as `metrics.csv`.
    pub metrics: Vec<Value>,
    pub summary: Value,
}

/// Writes `rows` to `<dir>/<name>` with a header taken from the row type.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_record(dir: &Path, record: &ExperimentRecord) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(record)?)?;
    Ok(())
}

pub fn read_record(path: &Path) -> CliResult<ExperimentRecord> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
