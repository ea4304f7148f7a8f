//! JSON and flat CSV emission.
//!
//! CSV files use `,` as delimiter, `.` as decimal point and LF line endings.
//! Column order is part of the format and only changes with
//! [`CSV_FORMAT_VERSION`].

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::lifelong::MetricsReport;
use super::scaling::ScalingReport;
use super::sweep::SweepReport;
use crate::error::{Error, Result};

pub const CSV_FORMAT_VERSION: u32 = 1;

pub const METRICS_COLUMNS: [&str; 12] = [
    "router",
    "edits",
    "codebook_size",
    "parameter_count",
    "reliability",
    "generalization",
    "locality",
    "op",
    "inserted",
    "refined",
    "conflict_inserted",
    "adaptor_failures",
];

pub const SWEEP_COLUMNS: [&str; 9] = [
    "axis",
    "value",
    "reliability",
    "generalization",
    "locality",
    "op",
    "codebook_size",
    "mean_unrelated_displacement",
    "router",
];

pub const SCALING_COLUMNS: [&str; 9] = [
    "edits",
    "codebook_size",
    "parameter_count",
    "reliability",
    "generalization",
    "locality",
    "op",
    "elapsed_secs",
    "match_latency_secs",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b',')
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Shortest round-trip form, locale independent.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn metrics_csv(report: &MetricsReport) -> Result<String> {
    let mut w = writer(Vec::new());
    w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
    for m in &report.per_checkpoint {
        w.write_record([
            report.router.name().to_string(),
            m.edits.to_string(),
            m.codebook_size.to_string(),
            m.parameter_count.to_string(),
            num(m.reliability),
            num(m.generalization),
            num(m.locality),
            num(m.op),
            m.inserted.to_string(),
            m.refined.to_string(),
            m.conflict_inserted.to_string(),
            m.adaptor_failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn sweep_csv(report: &SweepReport, router: &str) -> Result<String> {
    let mut w = writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            report.axis.name().to_string(),
            num(r.value),
            num(r.reliability),
            num(r.generalization),
            num(r.locality),
            num(r.op),
            r.codebook_size.to_string(),
            num(r.mean_unrelated_displacement),
            router.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn scaling_csv(report: &ScalingReport) -> Result<String> {
    let mut w = writer(Vec::new());
    w.write_record(SCALING_COLUMNS).map_err(csv_err)?;
    for p in &report.checkpoints {
        let m = &p.metrics;
        w.write_record([
            m.edits.to_string(),
            m.codebook_size.to_string(),
            m.parameter_count.to_string(),
            num(m.reliability),
            num(m.generalization),
            num(m.locality),
            num(m.op),
            num(p.elapsed_secs),
            num(p.match_latency_secs),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes()).map_err(|e| Error::io(path, e))
}
