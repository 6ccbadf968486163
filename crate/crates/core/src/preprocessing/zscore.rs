use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels whose spread is below this are treated as constant.
pub const CONSTANT_STD: f64 = 1e-8;

/// Per-channel mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreStats {
    /// Fits on training rows. All rows must share one width.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Contract("z-score fit needs at least one row".into()))?;
        let width = first.as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            let r = r.as_ref();
            if r.len() != width {
                return Err(Error::Dimension(format!(
                    "z-score rows of width {width} and {}",
                    r.len()
                )));
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(ZScoreStats { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn is_constant(&self, channel: usize) -> bool {
        self.std[channel] < CONSTANT_STD
    }

    pub fn apply_value(&self, channel: usize, x: f64) -> f64 {
        if self.is_constant(channel) {
            0.0
        } else {
            (x - self.mean[channel]) / self.std[channel]
        }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.apply_value(j, x))
            .collect()
    }
}
