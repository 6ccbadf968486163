//! Random-forest regression used only for its impurity-based feature
//! importances.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMPORTANCE_THRESHOLD: f64 = 1e-3;
pub const MIN_ROWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `max(1, ⌊F/3⌋)`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 5,
            max_features: None,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub importances: Vec<f64>,
    pub retained: Vec<usize>,
    pub threshold: f64,
}

impl FeatureSelection {
    /// Keeps every feature whose importance is at least `threshold`.
    pub fn from_importances(importances: Vec<f64>, threshold: f64) -> Result<Self> {
        let retained: Vec<usize> = importances
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= threshold)
            .map(|(i, _)| i)
            .collect();
        if retained.is_empty() {
            return Err(Error::Data(format!(
                "no feature reaches importance {threshold}"
            )));
        }
        Ok(FeatureSelection {
            importances,
            retained,
            threshold,
        })
    }
}

/// Fits the forest on `columns` (one vector per feature) against `y` and
/// returns importances normalized to sum to one.
pub fn forest_importances(columns: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<Vec<f64>> {
    let n = y.len();
    if n < MIN_ROWS {
        return Err(Error::Contract(format!(
            "feature selection needs at least {MIN_ROWS} rows, got {n}"
        )));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("feature columns and targets differ in length".into()));
    }
    if cfg.n_trees == 0 || cfg.min_samples_leaf == 0 {
        return Err(Error::Config("forest needs at least one tree and leaf size >= 1".into()));
    }
    let varies = |c: &Vec<f64>| c.iter().any(|&v| v != c[0]);
    if !columns.iter().any(varies) {
        return Err(Error::Data("every candidate feature is constant".into()));
    }
    let f = columns.len();
    let m = cfg.max_features.unwrap_or((f / 3).max(1)).clamp(1, f);

    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            grow_tree(columns, y, cfg, m, &mut rng)
        })
        .collect();
    let mut total = vec![0.0; f];
    for imp in &per_tree {
        for (a, b) in total.iter_mut().zip(imp) {
            *a += b;
        }
    }
    let sum: f64 = total.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Data("no split reduces the target variance".into()));
    }
    Ok(total.into_iter().map(|v| v / sum).collect())
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn sse(idx: &[usize], y: &[f64]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    idx.iter().map(|&i| (y[i] - mean) * (y[i] - mean)).sum()
}

fn best_split(
    idx: &[usize],
    columns: &[Vec<f64>],
    y: &[f64],
    features: &[usize],
    min_leaf: usize,
    node_sse: f64,
) -> Option<Split> {
    let n = idx.len();
    let mut order = idx.to_vec();
    let mut best: Option<Split> = None;
    let total_s: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_q: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    for &feat in features {
        let x = &columns[feat];
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let (mut s, mut q) = (0.0, 0.0);
        for pos in 0..n - 1 {
            let i = order[pos];
            s += y[i];
            q += y[i] * y[i];
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf || x[i] == x[order[pos + 1]] {
                continue;
            }
            let sse_l = q - s * s / nl as f64;
            let (sr, qr) = (total_s - s, total_q - q);
            let sse_r = qr - sr * sr / nr as f64;
            let gain = node_sse - sse_l.max(0.0) - sse_r.max(0.0);
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature: feat,
                    threshold: 0.5 * (x[i] + x[order[pos + 1]]),
                    gain,
                });
            }
        }
    }
    best
}

fn grow_tree(
    columns: &[Vec<f64>],
    y: &[f64],
    cfg: &ForestConfig,
    max_features: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = y.len();
    let f = columns.len();
    let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut importance = vec![0.0; f];
    let mut stack = vec![(sample, 0usize)];
    while let Some((idx, depth)) = stack.pop() {
        if depth >= cfg.max_depth || idx.len() < 2 * cfg.min_samples_leaf {
            continue;
        }
        let node_sse = sse(&idx, y);
        if node_sse <= 0.0 {
            continue;
        }
        let features = index::sample(rng, f, max_features).into_vec();
        let Some(split) = best_split(&idx, columns, y, &features, cfg.min_samples_leaf, node_sse)
        else {
            continue;
        };
        importance[split.feature] += split.gain;
        let x = &columns[split.feature];
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| x[i] <= split.threshold);
        stack.push((right, depth + 1));
        stack.push((left, depth + 1));
    }
    importance
}
