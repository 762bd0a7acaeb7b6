//! Result rows and their CSV / JSON encodings.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str = "experiment,param,method,metric,stderr,n_realizations,seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    /// Sweep coordinate: sensor count, power budget or step index.
    pub param: f64,
    pub method: String,
    pub metric: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    pub seed: u64,
}

/// Sort by experiment, then parameter point, then method.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.param.total_cmp(&b.param))
            .then(a.method.cmp(&b.method))
    });
}

fn csv_line(r: &ResultRow) -> String {
    format!(
        "{},{},{},{:.16e},{:.16e},{},{}",
        r.experiment, r.param, r.method, r.metric, r.stderr, r.n_realizations, r.seed
    )
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", csv_line(r))?;
    }
    Ok(())
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

pub fn to_json(rows: &[ResultRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows are plain data")
}

/// Writes the CSV to `path` and, when `json` is set, a mirror next to it
/// with the `.json` extension.
pub fn emit_results(rows: &[ResultRow], path: &Path, json: bool) -> Result<()> {
    std::fs::write(path, to_csv(rows))?;
    if json {
        std::fs::write(path.with_extension("json"), to_json(rows))?;
    }
    Ok(())
}
