//! Versioned CSV schemas for traces and summaries.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, BenchError, Result};

pub const TRACE_SCHEMA: &str = "l2s-bench-trace/1";
pub const SUMMARY_SCHEMA: &str = "l2s-bench-summary/1";
pub const BEST_SCHEMA: &str = "l2s-bench-best/1";
pub const STUDY_SCHEMA: &str = "l2s-bench-subsample-study/1";

/// One recorded point of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub algorithm: String,
    pub eta: f64,
    pub m: u64,
    pub seed: u64,
    /// Cumulative IFO / n.
    pub passes: f64,
    pub ifo: u64,
    pub objective: f64,
    /// `F(x) − F_best`, with `F_best` the lowest objective seen in the experiment.
    pub suboptimality: f64,
    pub grad_norm_sq: f64,
}

/// One row per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub algorithm: String,
    pub eta: f64,
    pub m: u64,
    pub seed: u64,
    /// `ok`, `budget` or `diverged`.
    pub status: String,
    pub ifo: Option<u64>,
    pub passes: Option<f64>,
    pub final_objective: Option<f64>,
    pub final_grad_norm_sq: Option<f64>,
    pub trace_file: Option<String>,
    pub note: String,
}

/// Best step size per algorithm, chosen by mean final `‖∇F‖²` over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub algorithm: String,
    pub eta: f64,
    pub m: u64,
    pub seeds: usize,
    pub mean_final_grad_norm_sq: f64,
    pub total_ifo: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub n_prime: usize,
    /// `n-independent` or `n-dependent`.
    pub config: String,
    pub eta: f64,
    pub m: u64,
    pub seeds: usize,
    pub mean_final_grad_norm_sq: f64,
}

/// Serializes `rows` as CSV preceded by a `# schema: ...` line. The column
/// header comes from the first row, so an empty table has no header.
pub fn write_csv<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# schema: {schema}").expect("writing to memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row).map_err(BenchError::csv(path))?;
        }
        w.flush().map_err(BenchError::io(path))?;
    }
    std::fs::write(path, buf).map_err(BenchError::io(path))
}

/// Reads a CSV written by [`write_csv`], checking the schema line.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(BenchError::io(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(BenchError::io(path))?;
    let found = first.trim().strip_prefix("# schema: ").unwrap_or("");
    if found != schema {
        return config(format!(
            "{}: expected schema `{schema}`, found `{}`",
            path.display(),
            first.trim()
        ));
    }
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(BenchError::csv(path))
}

/// Schema tag of a CSV file, if it has one.
pub fn schema_of(path: &Path) -> Option<String> {
    let file = std::fs::File::open(path).ok()?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).ok()?;
    first.trim().strip_prefix("# schema: ").map(str::to_string)
}
