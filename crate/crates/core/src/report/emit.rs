//! CSV and JSON result files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, Provenance, ResultRow};

pub const CSV_HEADER: &str =
    "technique,sweep_axis,sweep_value,nrmse_m,runtime_mean_s,runtime_total_s,convergence_rate,trials,seed";

/// Columns holding wall-clock measurements, which differ between runs.
pub const TIMING_COLUMNS: [usize; 2] = [4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidInput(format!("unknown format `{s}`"))),
        }
    }
}

/// Writes the provenance of every result as `#` comment lines: the fields
/// shared by all results once, then one line per experiment.
pub fn provenance_comments(results: &[ExperimentResult]) -> String {
    let mut out = String::new();
    let Some(first) = results.first() else {
        return out;
    };
    const PER_RESULT: [&str; 4] = ["config_hash", "master_seed", "victims", "rescuers"];
    for (key, value) in first.provenance.fields() {
        if !PER_RESULT.contains(&key) {
            let _ = writeln!(out, "# {key}: {value}");
        }
    }
    for (i, r) in results.iter().enumerate() {
        let p = &r.provenance;
        let _ = writeln!(
            out,
            "# experiment {i}: config_hash={} master_seed={} victims={} rescuers={}",
            p.config_hash, p.master_seed, p.victims, p.rescuers
        );
    }
    out
}

fn csv_row(row: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.technique,
        row.sweep_axis.map_or("none", |a| a.name()),
        row.sweep_value.map_or(String::new(), |v| v.to_string()),
        row.nrmse_m,
        row.runtime_mean_s,
        row.runtime_total_s,
        row.convergence_rate,
        row.trials,
        row.seed
    )
}

pub fn results_csv(results: &[ExperimentResult]) -> String {
    let mut out = provenance_comments(results);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in results {
        for row in &r.rows {
            out.push_str(&csv_row(row));
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    columns: Vec<&'static str>,
    results: &'a [ExperimentResult],
}

pub fn results_json(results: &[ExperimentResult]) -> Result<String> {
    let doc = JsonDoc {
        columns: CSV_HEADER.split(',').collect(),
        results,
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_results(results: &[ExperimentResult], format: Format, path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to write".into()));
    }
    let body = match format {
        Format::Csv => results_csv(results),
        Format::Json => results_json(results)?,
    };
    std::fs::write(path, body)?;
    Ok(())
}

/// Reads results back from the JSON format.
pub fn read_results_json(text: &str) -> Result<Vec<ExperimentResult>> {
    #[derive(serde::Deserialize)]
    struct Doc {
        results: Vec<ExperimentResult>,
    }
    Ok(serde_json::from_str::<Doc>(text)?.results)
}

/// CSV with the timing columns blanked, for run-to-run comparisons.
pub fn strip_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') || line == CSV_HEADER {
                return line.to_string();
            }
            line.split(',')
                .enumerate()
                .map(|(i, f)| if TIMING_COLUMNS.contains(&i) { "" } else { f })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Provenance of the first result, which every file carries.
pub fn primary_provenance(results: &[ExperimentResult]) -> Option<&Provenance> {
    results.first().map(|r| &r.provenance)
}
