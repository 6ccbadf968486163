//! Browser bindings. Every export returns a JSON string for the page to
//! plot.

use rul_forge::metrics::evaluate_test;
use rul_forge::model::{ModelConfig, Variant};
use rul_forge::preprocessing::{
    ewma_smooth, kmeans_assign, kmeans_fit, split_train_val, FittedPipeline, ForestConfig, Mode, PipelineConfig,
    ZScoreStats,
};
use rul_forge::synthetic::{generate_fleet, FleetSpec, Profile};
use rul_forge::training::{train, TrainConfig};
use rul_forge::Result;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn finish(value: Result<serde_json::Value>) -> std::result::Result<String, JsError> {
    value.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

/// Raw and EWMA-smoothed trace of the first informative sensor of one
/// run-to-failure unit.
pub fn smoothing_json(seed: u64, noise_std: f64, beta: f64, exponential: bool) -> Result<serde_json::Value> {
    let spec = FleetSpec {
        train_units: 1,
        test_units: 0,
        noise_std,
        profile: if exponential { Profile::Exponential } else { Profile::Linear },
        seed,
        ..FleetSpec::default()
    };
    let unit = generate_fleet(&spec)?.train.remove(0);
    let sensor = spec.informative()[0];
    let raw: Vec<f64> = unit.records.iter().map(|r| r.sensors[sensor]).collect();
    Ok(json!({
        "sensor": rul_forge::cmapss::SENSOR_NAMES[sensor],
        "raw": raw,
        "smoothed": ewma_smooth(&raw, beta),
    }))
}

#[wasm_bindgen]
pub fn smoothing_demo(seed: u32, noise_std: f64, beta: f64, exponential: bool) -> std::result::Result<String, JsError> {
    finish(smoothing_json(u64::from(seed), noise_std, beta, exponential))
}

/// One sensor of a six-regime unit before normalization, after a single
/// global z-score, and after a z-score within each k-means regime.
pub fn regimes_json(seed: u64) -> Result<serde_json::Value> {
    let spec = FleetSpec {
        train_units: 6,
        test_units: 0,
        setting_jitter: 0.002,
        seed,
        ..FleetSpec::default()
    }
    .with_six_regimes();
    let fleet = generate_fleet(&spec)?.train;
    let records: Vec<_> = fleet.iter().flat_map(|u| &u.records).collect();
    let settings: Vec<Vec<f64>> = records.iter().map(|r| r.settings.to_vec()).collect();
    let setting_stats = ZScoreStats::fit(&settings)?;
    let standardized: Vec<Vec<f64>> = settings.iter().map(|s| setting_stats.apply(s)).collect();
    let km = kmeans_fit(&standardized, 6, seed)?;
    let labels: Vec<usize> = standardized.iter().map(|s| kmeans_assign(&km.centroids, s)).collect();

    let sensor = spec.informative()[0];
    let values: Vec<f64> = records.iter().map(|r| r.sensors[sensor]).collect();
    let global = ZScoreStats::fit(&values.iter().map(|&v| [v]).collect::<Vec<_>>())?;
    let per_regime = (0..6)
        .map(|k| {
            let rows: Vec<[f64; 1]> = values.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(&v, _)| [v]).collect();
            ZScoreStats::fit(&rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = fleet[0].len();
    Ok(json!({
        "sensor": rul_forge::cmapss::SENSOR_NAMES[sensor],
        "regime": &labels[..n],
        "raw": &values[..n],
        "global": values[..n].iter().map(|&v| global.apply_value(0, v)).collect::<Vec<_>>(),
        "per_regime": values[..n].iter().zip(&labels).map(|(&v, &k)| per_regime[k].apply_value(0, v)).collect::<Vec<_>>(),
        "iterations": km.iterations,
    }))
}

#[wasm_bindgen]
pub fn regime_demo(seed: u32) -> std::result::Result<String, JsError> {
    finish(regimes_json(u64::from(seed)))
}

/// Trains a tiny model on a small synthetic fleet and scores it on the
/// held-out test units.
pub fn training_json(variant: &str, epochs: usize, seed: u64) -> Result<serde_json::Value> {
    let variant: Variant = variant.parse()?;
    let spec = FleetSpec {
        train_units: 12,
        test_units: 8,
        min_lifetime: 80,
        max_lifetime: 160,
        seed,
        ..FleetSpec::default()
    };
    let fleet = generate_fleet(&spec)?;
    let config = PipelineConfig {
        forest: ForestConfig {
            n_trees: 20,
            seed,
            ..ForestConfig::default()
        },
        ..PipelineConfig::default()
    };
    let pipeline = FittedPipeline::fit("synthetic", Mode::SingleCondition, &fleet.train, config)?;
    let (tr, va) = split_train_val(&pipeline.train_windows(&fleet.train)?, 0.8, seed)?;
    let mut model = ModelConfig::new(pipeline.feature_dim()).with_variant(variant);
    model.num_blocks = 1;
    model.hidden_dim = 8;
    model.projection_dim = 8;
    model.corrector_hidden_dim = 8;
    model.seed = seed;
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 64,
        max_epochs: epochs.max(1),
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&model, &tr, &va, &cfg)?;
    let report = evaluate_test(&outcome.checkpoint, &pipeline, &fleet.test, &fleet.test_rul)?;
    Ok(json!({
        "variant": variant.label(),
        "history": outcome.history.iter().map(|r| json!({"epoch": r.epoch, "train_mse": r.train_mse, "val_rmse": r.val_rmse})).collect::<Vec<_>>(),
        "rmse": report.rmse,
        "mae": report.mae_cycles,
        "r2": report.r2,
        "units": report.units,
    }))
}

#[wasm_bindgen]
pub fn training_demo(variant: &str, epochs: u32, seed: u32) -> std::result::Result<String, JsError> {
    finish(training_json(variant, epochs as usize, u64::from(seed)))
}
