#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rul_forge::cmapss::{CycleRecord, EngineTrajectory, NUM_SENSORS};
use rul_forge::preprocessing::{FittedPipeline, SensorNormalizer};

pub const CAP: f64 = 125.0;
pub const W: usize = 15;
pub const WARMUP: u32 = 10;

/// A window cut from first principles: the feature rows of cycles
/// `end-14..=end` and the capped label at `end`.
#[derive(Debug, PartialEq)]
pub struct OracleWindow {
    pub unit: u32,
    pub end_cycle: u32,
    pub rows: Vec<f64>,
    pub label: f64,
}

fn zscore(x: f64, mean: f64, std: f64) -> f64 {
    if std < 1e-8 {
        0.0
    } else {
        (x - mean) / std
    }
}

/// Feature rows for a single-condition unit rebuilt from the fitted
/// statistics with plain loops.
pub fn oracle_features(p: &FittedPipeline, traj: &EngineTrajectory) -> Vec<Vec<f64>> {
    let stats = match &p.sensors {
        SensorNormalizer::Global { stats } => stats,
        SensorNormalizer::Regimes { .. } => panic!("oracle covers the global normalizer only"),
    };
    let retained = &p.selection.retained;
    let mut smooth: Vec<f64> = Vec::new();
    let mut out = Vec::new();
    for (t, r) in traj.records.iter().enumerate() {
        let mut row: Vec<f64> = (0..3)
            .map(|j| zscore(r.settings[j], p.settings.mean[j], p.settings.std[j]))
            .collect();
        let norm: Vec<f64> = retained
            .iter()
            .map(|&s| zscore(r.sensors[s], stats.mean[s], stats.std[s]))
            .collect();
        if t == 0 {
            smooth = norm.clone();
        } else {
            for (m, x) in smooth.iter_mut().zip(&norm) {
                *m = 0.98 * *m + (1.0 - 0.98) * x;
            }
        }
        row.extend(&norm);
        row.extend(&smooth);
        out.push(row);
    }
    out
}

/// Enumerates every training window of full run-to-failure units.
pub fn oracle_train_windows(p: &FittedPipeline, units: &[EngineTrajectory]) -> Vec<OracleWindow> {
    let mut out = Vec::new();
    for u in units {
        let feats = oracle_features(p, u);
        let life = u.records.len() as u32;
        for end in 1..=life {
            let start = end as i64 - W as i64 + 1;
            if start <= WARMUP as i64 {
                continue;
            }
            let rows = (start as u32..=end)
                .flat_map(|c| feats[(c - 1) as usize].clone())
                .collect();
            out.push(OracleWindow {
                unit: u.unit,
                end_cycle: end,
                rows,
                label: f64::min(CAP, (life - end) as f64) / CAP,
            });
        }
    }
    out
}

fn record(cycle: u32, settings: [f64; 3], sensors: [f64; NUM_SENSORS]) -> CycleRecord {
    CycleRecord {
        cycle,
        settings,
        sensors,
    }
}

pub const REGIME_SETTINGS: [[f64; 3]; 2] = [[0.0, 0.0, 100.0], [20.0, 0.7, 60.0]];

/// Two operating regimes whose sensors sit 10 units apart. Sensor 0 also
/// degrades with life so the forest has a signal. Returns the units and the
/// true regime of every record.
pub fn two_regime_fixture() -> (Vec<EngineTrajectory>, Vec<Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut units = Vec::new();
    let mut regimes = Vec::new();
    for unit in 1..=10 {
        let life = 90 + 5 * unit;
        let mut recs = Vec::new();
        let mut reg = Vec::new();
        for c in 1..=life {
            let k = rng.random_range(0..2);
            let mut sensors = [0.0; NUM_SENSORS];
            for (s, v) in sensors.iter_mut().enumerate() {
                *v = 10.0 * k as f64 + noise.sample(&mut rng) + s as f64;
            }
            sensors[0] += 5.0 * c as f64 / life as f64;
            recs.push(record(c, REGIME_SETTINGS[k], sensors));
            reg.push(k);
        }
        units.push(EngineTrajectory { unit, records: recs });
        regimes.push(reg);
    }
    (units, regimes)
}

/// Columns where only `informative` tracks the target.
pub fn single_informative_columns(informative: usize, rows: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..125.0)).collect();
    let columns = (0..NUM_SENSORS)
        .map(|s| {
            if s == informative {
                y.iter().map(|v| v / 10.0 + 0.01 * rng.random::<f64>()).collect()
            } else {
                (0..rows).map(|_| rng.random::<f64>()).collect()
            }
        })
        .collect();
    (columns, y)
}

/// Training windows of a small single-regime synthetic fleet.
pub fn fleet_windows(units: usize) -> rul_forge::preprocessing::WindowBatch {
    use rul_forge::preprocessing::{Mode, PipelineConfig};
    use rul_forge::synthetic::{generate_fleet, FleetSpec};
    let spec = FleetSpec {
        train_units: units,
        test_units: 0,
        min_lifetime: 60,
        max_lifetime: 120,
        ..FleetSpec::default()
    };
    let train = generate_fleet(&spec).unwrap().train;
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &train, PipelineConfig::default()).unwrap();
    p.train_windows(&train).unwrap()
}
