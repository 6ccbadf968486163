use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RULW";
const VERSION: u32 = 1;

/// Unit and last cycle of one window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub unit: u32,
    pub end_cycle: u32,
}

/// `B × W × F` model inputs with their normalized labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub inputs: Tensor,
    pub labels: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl WindowBatch {
    pub fn new(inputs: Tensor, labels: Vec<f64>, provenance: Vec<Provenance>) -> Result<Self> {
        let &[b, _, _] = inputs.shape() else {
            return Err(Error::Dimension(format!(
                "window batch needs a B x W x F tensor, got {:?}",
                inputs.shape()
            )));
        };
        if labels.len() != b || provenance.len() != b {
            return Err(Error::Dimension(format!(
                "{b} windows but {} labels and {} provenance records",
                labels.len(),
                provenance.len()
            )));
        }
        Ok(WindowBatch {
            inputs,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// The `W × F` slice of window `i`.
    pub fn window(&self, i: usize) -> &[f64] {
        let step = self.window_len() * self.feature_dim();
        &self.inputs.data()[i * step..(i + 1) * step]
    }

    /// Unit ids in order of first appearance.
    pub fn units(&self) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for p in &self.provenance {
            if out.last() != Some(&p.unit) && !out.contains(&p.unit) {
                out.push(p.unit);
            }
        }
        out
    }

    /// Windows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> WindowBatch {
        let (w, f) = (self.window_len(), self.feature_dim());
        let mut data = Vec::with_capacity(indices.len() * w * f);
        for &i in indices {
            data.extend_from_slice(self.window(i));
        }
        WindowBatch {
            inputs: Tensor::new(vec![indices.len(), w, f], data).expect("sizes agree"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * (self.inputs.len() + self.len()) + 8 * self.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.len() as u32, self.window_len() as u32, self.feature_dim() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.inputs.data().iter().chain(&self.labels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.provenance {
            out.extend_from_slice(&p.unit.to_le_bytes());
            out.extend_from_slice(&p.end_cycle.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Data(format!("window file: {msg}"));
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(bad("missing RULW header"));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes"));
        if word(0) != VERSION {
            return Err(bad(&format!("unsupported version {}", word(0))));
        }
        let (b, w, f) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let n_inputs = b * w * f;
        let expected = 20 + 8 * (n_inputs + b) + 8 * b;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {expected} bytes for {b} x {w} x {f}, found {}",
                bytes.len()
            )));
        }
        let mut floats = bytes[20..20 + 8 * (n_inputs + b)]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let data: Vec<f64> = floats.by_ref().take(n_inputs).collect();
        let labels: Vec<f64> = floats.collect();
        let provenance = bytes[20 + 8 * (n_inputs + b)..]
            .chunks_exact(8)
            .map(|c| Provenance {
                unit: u32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                end_cycle: u32::from_le_bytes(c[4..].try_into().expect("4 bytes")),
            })
            .collect();
        WindowBatch::new(Tensor::new(vec![b, w, f], data)?, labels, provenance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Splits by unit: a seeded shuffle of the unit ids sends `round(ratio · n)`
/// units to the training side. Window order within each side is preserved.
pub fn split_train_val(batch: &WindowBatch, ratio: f64, seed: u64) -> Result<(WindowBatch, WindowBatch)> {
    let mut units = batch.units();
    if units.len() < 5 {
        return Err(Error::Contract(format!(
            "a unit-level split needs at least 5 units, got {}",
            units.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let n_train = ((ratio * units.len() as f64).round() as usize).clamp(1, units.len() - 1);
    let train_units = &units[..n_train];
    let (train, val): (Vec<usize>, Vec<usize>) =
        (0..batch.len()).partition(|&i| train_units.contains(&batch.provenance[i].unit));
    Ok((batch.select(&train), batch.select(&val)))
}
