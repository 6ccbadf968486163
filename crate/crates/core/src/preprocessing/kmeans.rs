use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; on exact ties the lowest index wins.
pub fn kmeans_assign(centroids: &[Vec<f64>], row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, row);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn distinct_rows(rows: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding followed by Lloyd iterations until no centroid moves
/// more than [`SHIFT_TOLERANCE`] or [`MAX_ITERATIONS`] is reached. A cluster
/// that loses all its points keeps its previous centroid.
pub fn kmeans_fit(rows: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".into()));
    }
    let distinct = distinct_rows(rows);
    if distinct < k {
        return Err(Error::Data(format!(
            "k-means with k={k} needs at least {k} distinct rows, found {distinct}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        let c = rows[pick.expect("distinct rows remain")].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }

    let dim = rows[0].len();
    let mut inertia = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        let mut total = 0.0;
        for r in rows {
            let c = kmeans_assign(&centroids, r);
            total += sq_dist(r, &centroids[c]);
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(r) {
                *s += x;
            }
        }
        inertia.push(total);
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        iterations,
        inertia,
    })
}
