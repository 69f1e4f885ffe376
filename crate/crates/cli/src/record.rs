use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Format;
use crate::CliError;

/// One timed run. Serialized with the header
/// `model,method,n_params,wall_time_s,nf,nJ,max_err,retcode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub model: String,
    pub method: String,
    pub n_params: usize,
    pub wall_time_s: f64,
    pub nf: usize,
    #[serde(rename = "nJ")]
    pub nj: usize,
    /// Empty when no reference was computed.
    pub max_err: Option<f64>,
    pub retcode: String,
}

pub fn write_records(path: &Path, format: Format, records: &[BenchRecord]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
            for r in records {
                w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            if records.is_empty() {
                w.write_record(["model", "method", "n_params", "wall_time_s", "nf", "nJ", "max_err", "retcode"])
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            w.flush().map_err(io)
        }
        Format::Json => {
            let s = serde_json::to_string_pretty(records).map_err(|e| CliError::Runtime(e.to_string()))?;
            fs::write(path, s + "\n").map_err(io)
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>, CliError> {
    let bad = |e: String| CliError::Runtime(format!("cannot read {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let s = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        return serde_json::from_str(&s).map_err(|e| bad(e.to_string()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))
}

/// `run.csv` + `sens.csv` → `run.sens.csv`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}
