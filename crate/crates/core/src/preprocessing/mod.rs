//! Condition-aware preprocessing: RUL labels, z-score and per-regime
//! normalization, forest-based sensor selection, smoothing and windowing.

mod ewma;
mod forest;
mod kmeans;
mod windows;
mod zscore;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmapss::{EngineTrajectory, Subset, NUM_SENSORS, NUM_SETTINGS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use ewma::ewma_smooth;
pub use forest::{forest_importances, FeatureSelection, ForestConfig, IMPORTANCE_THRESHOLD};
pub use kmeans::{kmeans_assign, kmeans_fit, KMeans, MAX_ITERATIONS, SHIFT_TOLERANCE};
pub use windows::{split_train_val, Provenance, WindowBatch};
pub use zscore::{ZScoreStats, CONSTANT_STD};

pub const RUL_CAP: f64 = 125.0;
pub const WINDOW_LEN: usize = 15;
pub const WARMUP_CYCLES: u32 = 10;
pub const EWMA_BETA: f64 = 0.98;
pub const NUM_REGIMES: usize = 6;
pub const TRAIN_FRACTION: f64 = 0.8;

/// RUL per cycle, `min(cap, max(0, T − t + offset))`.
pub fn compute_rul(traj: &EngineTrajectory, terminal_offset: u32, cap: f64) -> Result<Vec<f64>> {
    let t_end = traj.len() as f64;
    traj.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.cycle as usize != i + 1 {
                return Err(Error::Data(format!(
                    "unit {}: cycle {} at position {} breaks contiguity",
                    traj.unit,
                    r.cycle,
                    i + 1
                )));
            }
            let raw = t_end - r.cycle as f64 + terminal_offset as f64;
            Ok(raw.max(0.0).min(cap))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SingleCondition,
    MultiCondition,
}

impl Mode {
    pub fn for_subset(subset: Subset) -> Self {
        if subset.is_multi_condition() {
            Mode::MultiCondition
        } else {
            Mode::SingleCondition
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_len: usize,
    pub warmup_cycles: u32,
    pub rul_cap: f64,
    pub ewma_beta: f64,
    pub num_regimes: usize,
    pub importance_threshold: f64,
    pub forest: ForestConfig,
    pub kmeans_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_len: WINDOW_LEN,
            warmup_cycles: WARMUP_CYCLES,
            rul_cap: RUL_CAP,
            ewma_beta: EWMA_BETA,
            num_regimes: NUM_REGIMES,
            importance_threshold: IMPORTANCE_THRESHOLD,
            forest: ForestConfig::default(),
            kmeans_seed: 42,
        }
    }
}

/// Operating-regime centroids over standardized settings and the sensor
/// statistics of each regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub centroids: Vec<Vec<f64>>,
    pub sensor_stats: Vec<ZScoreStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SensorNormalizer {
    Global { stats: ZScoreStats },
    Regimes { model: RegimeModel },
}

/// One unit after normalization, selection and smoothing. Rows are
/// `[settings | retained sensors | smoothed retained sensors]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedUnit {
    pub unit: u32,
    pub cycles: Vec<u32>,
    pub features: Vec<Vec<f64>>,
    /// Capped RUL in cycles.
    pub rul: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Every full window of every unit.
    Train,
    /// Only the last window per unit, left-padded if short.
    Test,
}

/// Everything learned from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub subset: String,
    pub mode: Mode,
    pub config: PipelineConfig,
    pub settings: ZScoreStats,
    pub sensors: SensorNormalizer,
    pub selection: FeatureSelection,
}

fn all_records(units: &[EngineTrajectory]) -> impl Iterator<Item = &crate::cmapss::CycleRecord> {
    units.iter().flat_map(|u| &u.records)
}

impl FittedPipeline {
    pub fn fit(subset: &str, mode: Mode, train: &[EngineTrajectory], config: PipelineConfig) -> Result<Self> {
        let setting_rows: Vec<Vec<f64>> = all_records(train).map(|r| r.settings.to_vec()).collect();
        let settings = ZScoreStats::fit(&setting_rows)?;
        let sensor_rows: Vec<&[f64]> = all_records(train).map(|r| &r.sensors[..]).collect();

        let sensors = match mode {
            Mode::SingleCondition => SensorNormalizer::Global {
                stats: ZScoreStats::fit(&sensor_rows)?,
            },
            Mode::MultiCondition => {
                let standardized: Vec<Vec<f64>> = setting_rows.iter().map(|r| settings.apply(r)).collect();
                let km = kmeans_fit(&standardized, config.num_regimes, config.kmeans_seed)?;
                let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); config.num_regimes];
                for (row, s) in standardized.iter().zip(&sensor_rows) {
                    groups[kmeans_assign(&km.centroids, row)].push(s);
                }
                let sensor_stats = groups
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        if g.is_empty() {
                            return Err(Error::Data(format!(
                                "regime {k} has no training rows; fit with another seed"
                            )));
                        }
                        ZScoreStats::fit(g)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SensorNormalizer::Regimes {
                    model: RegimeModel {
                        centroids: km.centroids,
                        sensor_stats,
                    },
                }
            }
        };

        let mut pipeline = FittedPipeline {
            subset: subset.to_string(),
            mode,
            config,
            settings,
            sensors,
            selection: FeatureSelection {
                importances: vec![1.0 / NUM_SENSORS as f64; NUM_SENSORS],
                retained: (0..NUM_SENSORS).collect(),
                threshold: 0.0,
            },
        };

        let mut columns: Vec<Vec<f64>> = (0..NUM_SENSORS).map(|_| Vec::with_capacity(sensor_rows.len())).collect();
        let mut labels = Vec::with_capacity(sensor_rows.len());
        for traj in train {
            for row in pipeline.normalize_sensors(traj) {
                for (c, v) in columns.iter_mut().zip(row) {
                    c.push(v);
                }
            }
            labels.extend(compute_rul(traj, 0, pipeline.config.rul_cap)?);
        }
        let importances = forest_importances(&columns, &labels, &pipeline.config.forest)?;
        pipeline.selection =
            FeatureSelection::from_importances(importances, pipeline.config.importance_threshold)?;
        Ok(pipeline)
    }

    /// Width of every window row.
    pub fn feature_dim(&self) -> usize {
        NUM_SETTINGS + 2 * self.selection.retained.len()
    }

    pub fn standardize_settings(&self, settings: &[f64]) -> Vec<f64> {
        self.settings.apply(settings)
    }

    /// Regime of one record, or 0 in single-condition mode.
    pub fn regime(&self, settings: &[f64]) -> usize {
        match &self.sensors {
            SensorNormalizer::Global { .. } => 0,
            SensorNormalizer::Regimes { model } => {
                kmeans_assign(&model.centroids, &self.standardize_settings(settings))
            }
        }
    }

    /// All 21 sensors of every cycle, normalized globally or within the
    /// record's regime.
    pub fn normalize_sensors(&self, traj: &EngineTrajectory) -> Vec<Vec<f64>> {
        traj.records
            .iter()
            .map(|r| match &self.sensors {
                SensorNormalizer::Global { stats } => stats.apply(&r.sensors),
                SensorNormalizer::Regimes { model } => {
                    model.sensor_stats[self.regime(&r.settings)].apply(&r.sensors)
                }
            })
            .collect()
    }

    /// Smoothing runs over the whole unit starting at cycle 1; the warm-up
    /// rows are dropped later, at windowing time.
    pub fn transform(&self, traj: &EngineTrajectory, terminal_offset: u32) -> Result<ProcessedUnit> {
        let rul = compute_rul(traj, terminal_offset, self.config.rul_cap)?;
        let normalized = self.normalize_sensors(traj);
        let retained = &self.selection.retained;
        let smoothed: Vec<Vec<f64>> = retained
            .iter()
            .map(|&s| {
                let series: Vec<f64> = normalized.iter().map(|row| row[s]).collect();
                ewma_smooth(&series, self.config.ewma_beta)
            })
            .collect();
        let features = traj
            .records
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let mut row = self.standardize_settings(&r.settings);
                row.extend(retained.iter().map(|&s| normalized[t][s]));
                row.extend(smoothed.iter().map(|col| col[t]));
                row
            })
            .collect();
        Ok(ProcessedUnit {
            unit: traj.unit,
            cycles: traj.records.iter().map(|r| r.cycle).collect(),
            features,
            rul,
        })
    }

    pub fn windows(&self, units: &[ProcessedUnit], mode: WindowMode) -> Result<WindowBatch> {
        build_windows(units, mode, self.config.window_len, self.config.warmup_cycles, self.config.rul_cap)
    }

    /// Every training window of `train`.
    pub fn train_windows(&self, train: &[EngineTrajectory]) -> Result<WindowBatch> {
        let units = train
            .iter()
            .map(|t| self.transform(t, 0))
            .collect::<Result<Vec<_>>>()?;
        self.windows(&units, WindowMode::Train)
    }

    /// One window per test unit, labelled with its capped terminal RUL.
    pub fn test_windows(&self, test: &[EngineTrajectory], offsets: &[u32]) -> Result<WindowBatch> {
        if test.len() != offsets.len() {
            return Err(Error::Validation(format!(
                "{} test units but {} RUL offsets",
                test.len(),
                offsets.len()
            )));
        }
        let units = test
            .iter()
            .zip(offsets)
            .map(|(t, &o)| self.transform(t, o))
            .collect::<Result<Vec<_>>>()?;
        self.windows(&units, WindowMode::Test)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Drops cycles `≤ warmup`, then cuts windows of `window_len` rows. Labels
/// are RUL at the window's last cycle divided by `cap`.
pub fn build_windows(
    units: &[ProcessedUnit],
    mode: WindowMode,
    window_len: usize,
    warmup: u32,
    cap: f64,
) -> Result<WindowBatch> {
    if window_len == 0 {
        return Err(Error::Config("window length must be at least 1".into()));
    }
    let f = units.first().and_then(|u| u.features.first()).map_or(0, Vec::len);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for u in units {
        let start = u.cycles.iter().position(|&c| c > warmup).ok_or_else(|| {
            Error::Data(format!("unit {} has no cycles after cycle {warmup}", u.unit))
        })?;
        let rows = &u.features[start..];
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::Dimension(format!("unit {} has ragged feature rows", u.unit)));
        }
        let mut emit = |rows: &[&Vec<f64>], last: usize| {
            for r in rows {
                data.extend_from_slice(r);
            }
            labels.push(u.rul[last] / cap);
            provenance.push(Provenance {
                unit: u.unit,
                end_cycle: u.cycles[last],
            });
        };
        match mode {
            WindowMode::Train => {
                for end in start + window_len - 1..u.features.len() {
                    let rows: Vec<&Vec<f64>> = u.features[end + 1 - window_len..=end].iter().collect();
                    emit(&rows, end);
                }
            }
            WindowMode::Test => {
                let last = u.features.len() - 1;
                let avail = rows.len().min(window_len);
                let mut window: Vec<&Vec<f64>> = vec![&rows[0]; window_len - avail];
                window.extend(&rows[rows.len() - avail..]);
                emit(&window, last);
            }
        }
    }
    let b = labels.len();
    WindowBatch::new(Tensor::new(vec![b, window_len, f], data)?, labels, provenance)
}
