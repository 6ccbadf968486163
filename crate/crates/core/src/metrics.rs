//! Error metrics, the per-unit test protocol, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cmapss::EngineTrajectory;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Variant};
use crate::preprocessing::{FittedPipeline, WindowBatch};
use crate::training::predict_batch;

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Contract(format!(
            "metrics over {} true and {} predicted values",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sae: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum();
    Ok(sae / truth.len() as f64)
}

/// Coefficient of determination `1 − SSE/SST`.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sst: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Domain("r2 is undefined when the true values do not vary".into()));
    }
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitPrediction {
    pub unit_id: u32,
    pub true_rul: f64,
    pub pred_rul: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subset: String,
    pub variant: Variant,
    pub rmse: f64,
    pub mae_cycles: f64,
    /// MAE on the RUL/125 scale.
    pub mae_normalized: f64,
    pub r2: f64,
    pub units: Vec<UnitPrediction>,
    pub config_digest: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// Hex SHA-256 of the compact JSON encoding of `config`.
pub fn config_digest(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("json values always serialize");
    hex::encode(Sha256::digest(bytes))
}

impl EvaluationReport {
    pub fn from_predictions(
        subset: &str,
        variant: Variant,
        units: Vec<UnitPrediction>,
        cap: f64,
        config: serde_json::Value,
        seed: u64,
    ) -> Result<Self> {
        let truth: Vec<f64> = units.iter().map(|u| u.true_rul).collect();
        let pred: Vec<f64> = units.iter().map(|u| u.pred_rul).collect();
        let mae_cycles = mae(&truth, &pred)?;
        Ok(EvaluationReport {
            subset: subset.to_string(),
            variant,
            rmse: rmse(&truth, &pred)?,
            mae_cycles,
            mae_normalized: mae_cycles / cap,
            r2: r2(&truth, &pred)?,
            units,
            config_digest: config_digest(&config),
            seed,
            config,
        })
    }

    fn stem(&self) -> String {
        format!("{}_{}", self.subset, self.variant.token())
    }

    pub fn json_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_report.json", self.stem()))
    }

    pub fn predictions_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_predictions.csv", self.stem()))
    }

    pub fn fig2_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_fig2_series.csv", self.stem()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn predictions_csv(&self) -> String {
        units_csv(self.units.iter())
    }

    /// Per-unit series sorted by true RUL, largest first.
    pub fn fig2_csv(&self) -> String {
        let mut sorted: Vec<&UnitPrediction> = self.units.iter().collect();
        sorted.sort_by(|a, b| b.true_rul.total_cmp(&a.true_rul).then(a.unit_id.cmp(&b.unit_id)));
        units_csv(sorted.into_iter())
    }
}

fn units_csv<'a>(units: impl Iterator<Item = &'a UnitPrediction>) -> String {
    let mut out = String::from("unit_id,true_rul,pred_rul\n");
    for u in units {
        writeln!(out, "{},{},{}", u.unit_id, u.true_rul, u.pred_rul).expect("string write");
    }
    out
}

/// Report over a test batch holding one window per unit. True RUL is read
/// back from the labels; RUL values are whole cycles, so rounding recovers
/// them exactly.
pub fn evaluate_windows(
    checkpoint: &Checkpoint,
    pipeline: &FittedPipeline,
    windows: &WindowBatch,
) -> Result<EvaluationReport> {
    let units = windows.units();
    if units.len() != windows.len() {
        return Err(Error::Validation(format!(
            "test batch holds {} windows for {} units; expected one per unit",
            windows.len(),
            units.len()
        )));
    }
    let pred = predict_batch(checkpoint, windows)?;
    let cap = pipeline.config.rul_cap;
    let units = windows
        .provenance
        .iter()
        .zip(&windows.labels)
        .zip(pred)
        .map(|((p, &y), pred_rul)| UnitPrediction {
            unit_id: p.unit,
            true_rul: (y * cap).round(),
            pred_rul,
        })
        .collect();
    let config = serde_json::json!({
        "model": checkpoint.config,
        "training": checkpoint.training.as_ref().map(|t| &t.train_config),
        "pipeline": pipeline.config,
    });
    EvaluationReport::from_predictions(
        &pipeline.subset,
        checkpoint.config.variant(),
        units,
        cap,
        config,
        checkpoint.config.seed,
    )
}

/// One prediction per test unit from its last window, compared with the
/// capped terminal RUL.
pub fn evaluate_test(
    checkpoint: &Checkpoint,
    pipeline: &FittedPipeline,
    test: &[EngineTrajectory],
    offsets: &[u32],
) -> Result<EvaluationReport> {
    evaluate_windows(checkpoint, pipeline, &pipeline.test_windows(test, offsets)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the JSON report, or the two CSV files, into `dir`. Returns the
/// paths written.
pub fn emit_report(report: &EvaluationReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Json => {
            let path = report.json_path(dir);
            write(&path, &report.to_json()?)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let (p, f) = (report.predictions_path(dir), report.fig2_path(dir));
            write(&p, &report.predictions_csv())?;
            write(&f, &report.fig2_csv())?;
            Ok(vec![p, f])
        }
    }
}
