//! Prediction and metrics writers. Every file is written to a temporary
//! sibling and renamed into place, so a failed run leaves no partial output.

use std::io::{self, BufWriter, Write};
use std::path::Path;

use hcc_core::{HccPrediction, MeanSd, Method, Metrics, Taxonomy};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub fn write_atomic<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w).map_err(|e| CliError::io(path, e))?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// One prediction as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord<'a> {
    pub instance_id: &'a str,
    pub method: Method,
    pub prediction: &'a HccPrediction,
}

pub const PREDICTION_COLUMNS: [&str; 8] = [
    "instance_id",
    "method",
    "selected",
    "cost",
    "n_covered_leaves",
    "m_effective",
    "alpha_corrected",
    "fallback",
];

/// Node names joined by `|`, in node order.
pub fn join_names(t: &Taxonomy, set: &hcc_core::NodeSet) -> String {
    t.set_names(set).join("|")
}

pub fn write_predictions<W: Write>(
    w: W,
    t: &Taxonomy,
    records: &[PredictionRecord<'_>],
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(PREDICTION_COLUMNS)?;
    for r in records {
        let p = r.prediction;
        wtr.write_record([
            r.instance_id.to_string(),
            r.method.as_str().to_string(),
            join_names(t, &p.selected),
            p.cost.to_string(),
            p.covered_leaves.len().to_string(),
            p.m_effective.to_string(),
            p.alpha_corrected.to_string(),
            p.fallback.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSdDoc {
    pub mean: f64,
    pub sd: f64,
}

impl From<MeanSd> for MeanSdDoc {
    fn from(m: MeanSd) -> Self {
        Self {
            mean: m.mean,
            sd: m.sd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsDoc {
    pub coverage: MeanSdDoc,
    pub cost: MeanSdDoc,
    pub ps_size: MeanSdDoc,
    pub covered_leaves: MeanSdDoc,
    pub n_test: usize,
}

impl From<Metrics> for MetricsDoc {
    fn from(m: Metrics) -> Self {
        Self {
            coverage: m.coverage.into(),
            cost: m.cost.into(),
            ps_size: m.ps_size.into(),
            covered_leaves: m.covered_leaves.into(),
            n_test: m.n_test,
        }
    }
}

/// Per-run counters from the prediction audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditDoc {
    pub mean_m_effective: f64,
    pub mean_alpha_corrected: f64,
    pub fallbacks: usize,
    pub empty_sets: usize,
}

impl AuditDoc {
    pub fn from_predictions(preds: &[HccPrediction]) -> Self {
        let n = preds.len().max(1) as f64;
        Self {
            mean_m_effective: preds.iter().map(|p| p.m_effective as f64).sum::<f64>() / n,
            mean_alpha_corrected: preds.iter().map(|p| p.alpha_corrected).sum::<f64>() / n,
            fallbacks: preds.iter().filter(|p| p.fallback).count(),
            empty_sets: preds.iter().filter(|p| p.selected.is_empty()).count(),
        }
    }
}

pub const METRICS_COLUMNS: [&str; 12] = [
    "method",
    "alpha",
    "beta",
    "coverage_mean",
    "coverage_sd",
    "cost_mean",
    "cost_sd",
    "ps_size_mean",
    "ps_size_sd",
    "covered_leaves_mean",
    "covered_leaves_sd",
    "n_test",
];

/// One row of the flat metrics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub metrics: Metrics,
}

pub fn write_metrics_table<W: Write>(w: W, rows: &[MetricsRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(METRICS_COLUMNS)?;
    for r in rows {
        let m = r.metrics;
        wtr.write_record([
            r.method.as_str().to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            m.coverage.mean.to_string(),
            m.coverage.sd.to_string(),
            m.cost.mean.to_string(),
            m.cost.sd.to_string(),
            m.ps_size.mean.to_string(),
            m.ps_size.sd.to_string(),
            m.covered_leaves.mean.to_string(),
            m.covered_leaves.sd.to_string(),
            m.n_test.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
