use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scheme: String,
    #[serde(rename = "q_avg_uW")]
    pub q_avg_uw: f64,
    pub r_avg_mbps: f64,
    pub rho: f64,
    pub trial: usize,
}

const HEADER: [&str; 5] = ["scheme", "q_avg_uW", "r_avg_mbps", "rho", "trial"];

pub fn write_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in &result.records {
        w.serialize(CsvRow {
            scheme: r.scheme.name().to_string(),
            q_avg_uw: r.q_avg_uw,
            r_avg_mbps: r.r_avg_mbps,
            rho: r.rho,
            trial: r.trial,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Full result as pretty JSON; schedules appear when they were kept.
pub fn write_json<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes `result` to `path` in the requested format.
pub fn emit(result: &ExperimentResult, path: &Path, format: OutputFormat) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let out = std::io::BufWriter::new(file);
    match format {
        OutputFormat::Csv => write_csv(result, out),
        OutputFormat::Json => write_json(result, out),
    }
}
