//! CSV tables: sweep results, loss traces and mask reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::SweepRecord;
use crate::strategies::{Method, PruneScope};

pub const RESULTS_HEADER: &str = "task,method,scope,p,p_hat,retained_pct,dev_metric,test_metric,seed";

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// One row of the results table as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub method: Method,
    pub scope: PruneScope,
    pub p: f64,
    pub p_hat: f64,
    pub retained_pct: f64,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub seed: u64,
}

impl From<&SweepRecord> for ResultRow {
    fn from(r: &SweepRecord) -> Self {
        Self {
            task: r.task.clone(),
            method: r.method,
            scope: r.scope,
            p: r.p,
            p_hat: r.p_hat,
            retained_pct: r.retained_pct(),
            dev_metric: r.dev_metric,
            test_metric: r.test_metric,
            seed: r.seed,
        }
    }
}

pub fn results_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RESULTS_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.serialize(ResultRow::from(r)).map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_results(path: &Path, records: &[SweepRecord]) -> Result<()> {
    super::write_atomic(path, results_csv(records)?.as_bytes())
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Format(format!("unexpected results header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// `iteration,loss` table.
pub fn trace_csv(trace: &[(usize, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "loss"]).map_err(csv_err)?;
    for (t, v) in trace {
        w.write_record([t.to_string(), v.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

pub fn write_trace(path: &Path, trace: &[(usize, f64)]) -> Result<()> {
    super::write_atomic(path, trace_csv(trace)?.as_bytes())
}

/// Reads a two-column numeric table with a header row.
pub fn parse_trace(text: &str) -> Result<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| rec.get(k).map(str::trim).ok_or_else(|| Error::Format(format!("trace row {} is short", i + 1)));
        let t = field(0)?
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("trace row {}: {e}", i + 1)))?;
        let v = field(1)?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("trace row {}: {e}", i + 1)))?;
        if !v.is_finite() {
            return Err(Error::NonFinite("trace"));
        }
        out.push((t, v));
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<(usize, f64)>> {
    parse_trace(&super::read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReportRow {
    pub method: Method,
    pub scope: PruneScope,
    pub p: f64,
    pub p_hat: f64,
    pub pruned: usize,
    pub total: usize,
    pub bundle: String,
}

pub fn mask_report_csv(rows: &[MaskReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["method", "scope", "p", "p_hat", "pruned", "total", "bundle"]).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_mask_report(text: &str) -> Result<Vec<MaskReportRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}
