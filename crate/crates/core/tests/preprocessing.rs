mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rul_forge::cmapss::{CycleRecord, EngineTrajectory, NUM_SENSORS};
use rul_forge::preprocessing::{
    ewma_smooth, forest_importances, kmeans_assign, kmeans_fit, split_train_val, FeatureSelection,
    FittedPipeline, ForestConfig, Mode, PipelineConfig, WindowBatch, IMPORTANCE_THRESHOLD,
};
use rul_forge::synthetic::{generate_fleet, FleetSpec};
use rul_forge::Error;

fn small_fleet() -> Vec<EngineTrajectory> {
    let spec = FleetSpec {
        train_units: 5,
        test_units: 0,
        min_lifetime: 30,
        max_lifetime: 60,
        ..FleetSpec::default()
    };
    generate_fleet(&spec).unwrap().train
}

#[test]
fn windows_match_brute_force_enumeration() {
    let units = small_fleet();
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let batch = p.train_windows(&units).unwrap();
    let oracle = oracle_train_windows(&p, &units);
    let expected: usize = units.iter().map(|u| u.len() - 10 - 15 + 1).sum();
    assert_eq!(oracle.len(), expected);
    assert_eq!(batch.len(), oracle.len());
    for (i, o) in oracle.iter().enumerate() {
        assert_eq!(batch.provenance[i].unit, o.unit);
        assert_eq!(batch.provenance[i].end_cycle, o.end_cycle);
        assert_eq!(batch.labels[i].to_bits(), o.label.to_bits(), "label {i}");
        let got: Vec<u64> = batch.window(i).iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = o.rows.iter().map(|v| v.to_bits()).collect();
        assert_eq!(got, want, "window {i}");
    }
}

#[test]
fn test_window_is_left_padded() {
    let units = small_fleet();
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let mut short = units[0].clone();
    short.records.truncate(18);
    let batch = p.test_windows(&[short.clone()], &[7]).unwrap();
    assert_eq!(batch.len(), 1);
    assert_eq!(batch.provenance[0].end_cycle, 18);
    // 18 cycles leave 8 after the warm-up; 7 copies of cycle 11 pad the front.
    let feats = oracle_features(&p, &short);
    let f = p.feature_dim();
    let w = batch.window(0);
    for k in 0..7 {
        assert_eq!(&w[k * f..(k + 1) * f], &feats[10][..]);
    }
    assert_eq!(&w[14 * f..], &feats[17][..]);
    assert_eq!(batch.labels[0], 7.0 / 125.0);
    assert!(matches!(p.test_windows(&[short], &[]), Err(Error::Validation(_))));
}

#[test]
fn ewma_matches_step_response() {
    let mut x = vec![1.0; 200];
    x[0] = 0.0;
    let s = ewma_smooth(&x, 0.98);
    for (t, v) in s.iter().enumerate() {
        let want = 1.0 - 0.98f64.powi(t as i32);
        assert!((v - want).abs() <= 1e-12, "t={} {v} {want}", t + 1);
    }
}

fn regime_means(p: &FittedPipeline, units: &[EngineTrajectory], regimes: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let mut sum = vec![vec![0.0; NUM_SENSORS]; 2];
    let mut n = [0.0; 2];
    for (u, reg) in units.iter().zip(regimes) {
        for (row, &k) in p.normalize_sensors(u).iter().zip(reg) {
            for (acc, v) in sum[k].iter_mut().zip(row) {
                *acc += v;
            }
            n[k] += 1.0;
        }
    }
    sum.into_iter().zip(n).map(|(s, c)| s.into_iter().map(|v| v / c).collect()).collect()
}

#[test]
fn regime_normalization_centers_each_regime() {
    let (units, regimes) = two_regime_fixture();
    let cfg = PipelineConfig {
        num_regimes: 2,
        ..PipelineConfig::default()
    };
    let per = FittedPipeline::fit("fixture", Mode::MultiCondition, &units, cfg).unwrap();
    for m in regime_means(&per, &units, &regimes).iter().flatten() {
        assert!(m.abs() <= 0.05, "{m}");
    }
    let global = FittedPipeline::fit("fixture", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let worst = regime_means(&global, &units, &regimes)
        .iter()
        .flatten()
        .fold(0.0f64, |a, m| a.max(m.abs()));
    assert!(worst > 0.5, "{worst}");
}

#[test]
fn regime_assignment_matches_truth() {
    let (units, regimes) = two_regime_fixture();
    let cfg = PipelineConfig {
        num_regimes: 2,
        ..PipelineConfig::default()
    };
    let p = FittedPipeline::fit("fixture", Mode::MultiCondition, &units, cfg).unwrap();
    let a = p.regime(&REGIME_SETTINGS[0]);
    let b = p.regime(&REGIME_SETTINGS[1]);
    assert_ne!(a, b);
    for (u, reg) in units.iter().zip(&regimes) {
        for (r, &k) in u.records.iter().zip(reg) {
            assert_eq!(p.regime(&r.settings), if k == 0 { a } else { b });
        }
    }
}

#[test]
fn forest_finds_the_single_signal() {
    let (columns, y) = single_informative_columns(4, 600, 11);
    let imp = forest_importances(&columns, &y, &ForestConfig::default()).unwrap();
    assert!(imp[4] > 0.5, "{imp:?}");
    assert!((imp.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    let sel = FeatureSelection::from_importances(imp, IMPORTANCE_THRESHOLD).unwrap();
    assert!(sel.retained.contains(&4));
}

#[test]
fn forest_is_seed_deterministic() {
    let (columns, y) = single_informative_columns(2, 300, 3);
    let cfg = ForestConfig {
        n_trees: 10,
        ..ForestConfig::default()
    };
    let a = forest_importances(&columns, &y, &cfg).unwrap();
    let b = forest_importances(&columns, &y, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forest_rejects_tiny_inputs() {
    let (columns, y) = single_informative_columns(0, 50, 1);
    assert!(matches!(
        forest_importances(&columns, &y, &ForestConfig::default()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn kmeans_separates_far_clusters() {
    let centers = [[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..300 {
        let c = centers[i % 3];
        rows.push(vec![c[0] + rng.random::<f64>(), c[1] + rng.random::<f64>()]);
        truth.push(i % 3);
    }
    let km = kmeans_fit(&rows, 3, 42).unwrap();
    let labels: Vec<usize> = rows.iter().map(|r| kmeans_assign(&km.centroids, r)).collect();
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            assert_eq!(truth[i] == truth[j], labels[i] == labels[j]);
        }
    }
    // Inertia never increases between iterations.
    assert!(km.inertia.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{:?}", km.inertia);
}

#[test]
fn kmeans_needs_enough_distinct_rows() {
    let rows = vec![vec![1.0, 1.0]; 10];
    assert!(matches!(kmeans_fit(&rows, 2, 0), Err(Error::Data(_))));
}

#[test]
fn split_keeps_units_whole() {
    let units = small_fleet();
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let batch = p.train_windows(&units).unwrap();
    let (tr, va) = split_train_val(&batch, 0.8, 42).unwrap();
    assert_eq!(tr.len() + va.len(), batch.len());
    let (a, b) = (tr.units(), va.units());
    assert_eq!((a.len(), b.len()), (4, 1));
    assert!(a.iter().all(|u| !b.contains(u)));
}

#[test]
fn window_files_round_trip() {
    let units = small_fleet();
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let batch = p.train_windows(&units).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.rulw");
    batch.save(&path).unwrap();
    assert_eq!(WindowBatch::load(&path).unwrap(), batch);
    let json = dir.path().join("p.json");
    p.save(&json).unwrap();
    assert_eq!(FittedPipeline::load(&json).unwrap(), p);
    let mut bytes = batch.to_bytes();
    bytes[0] = b'X';
    assert!(WindowBatch::from_bytes(&bytes).is_err());
}

#[test]
fn unit_too_short_for_warmup_is_a_data_error() {
    let units = small_fleet();
    let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &units, PipelineConfig::default()).unwrap();
    let tiny = EngineTrajectory {
        unit: 99,
        records: units[0].records[..8].to_vec(),
    };
    let err = p.test_windows(&[tiny], &[3]).unwrap_err();
    assert!(matches!(err, Error::Data(ref m) if m.contains("99")), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ewma_stays_within_input_range(xs in prop::collection::vec(-1e3f64..1e3, 1..100)) {
        let s = ewma_smooth(&xs, 0.98);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.len(), xs.len());
        prop_assert!(s.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn window_count_per_unit(len in 26u32..120) {
        let records: Vec<CycleRecord> = small_fleet()[0].records.iter().cycle().take(len as usize)
            .enumerate()
            .map(|(i, r)| CycleRecord { cycle: i as u32 + 1, ..r.clone() })
            .collect();
        let unit = EngineTrajectory { unit: 1, records };
        let p = FittedPipeline::fit("synthetic", Mode::SingleCondition, &small_fleet(), PipelineConfig::default()).unwrap();
        let b = p.train_windows(&[unit]).unwrap();
        prop_assert_eq!(b.len(), len as usize - 24);
        prop_assert!(b.labels.iter().all(|&l| (0.0..=1.0).contains(&l)));
    }
}
