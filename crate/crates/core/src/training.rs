//! MSE objective, Adam, and the mini-batch training loop with early stopping.
//!
//! Gradients of a batch are computed in fixed-size shards, possibly on several
//! workers, and summed in shard order, so results do not depend on the number
//! of threads.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::model::{forward_graph, init_params, BiClstmParams, Checkpoint, ModelConfig, TrainingMeta};
use crate::preprocessing::{WindowBatch, RUL_CAP};
use crate::tensor::Tensor;

/// Windows per gradient shard. Fixed so the summation order is fixed.
pub const SHARD_SIZE: usize = 32;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "RUL_FORGE_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch size, max epochs and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// One Adam update of a flat slice. `step` is the 1-based step count used
/// for bias correction.
pub fn adam_update(
    cfg: &TrainConfig,
    step: u64,
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Moment estimates, one tensor per parameter in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &BiClstmParams) -> Self {
        let zeros: Vec<Tensor> = params.leaves().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Applies one Adam step to every parameter. A non-finite gradient aborts
/// before anything is modified.
pub fn adam_step(
    params: &mut BiClstmParams,
    grads: &BiClstmParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut bad = None;
    grads.for_each(|name, g| {
        if bad.is_none() && !g.is_finite() {
            bad = Some(name.to_string());
        }
    });
    if let Some(name) = bad {
        return Err(Error::Numerical(format!("non-finite gradient for {name}")));
    }
    state.step += 1;
    let step = state.step;
    let grads = grads.leaves();
    let mut k = 0;
    params.for_each_mut(|_, p| {
        adam_update(
            cfg,
            step,
            p.data_mut(),
            grads[k].data(),
            state.m[k].data_mut(),
            state.v[k].data_mut(),
        );
        k += 1;
    });
    Ok(())
}

/// Number of gradient workers: [`THREADS_ENV`] if set, otherwise all cores.
pub fn worker_threads() -> Result<usize> {
    match env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a pool of [`worker_threads`] workers. Browsers cannot spawn
/// threads, so wasm builds run on the caller's thread instead.
fn in_worker_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    if cfg!(target_family = "wasm") {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Time-major `(W · n) × F` input for windows `idx` of `batch`.
fn gather_time_major(batch: &WindowBatch, idx: &[usize]) -> Tensor {
    let (w, f) = (batch.window_len(), batch.feature_dim());
    let mut out = Vec::with_capacity(idx.len() * w * f);
    for t in 0..w {
        for &i in idx {
            out.extend_from_slice(&batch.window(i)[t * f..(t + 1) * f]);
        }
    }
    Tensor::new(vec![w * idx.len(), f], out).expect("sizes agree")
}

/// Raw model outputs (normalized scale) for windows `idx`.
fn forward_shard(params: &BiClstmParams, config: &ModelConfig, batch: &WindowBatch, idx: &[usize]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars = params.map(|_, t| g.leaf(t.clone()));
    let x = g.leaf(gather_time_major(batch, idx));
    let out = forward_graph(&mut g, &vars, config, x, batch.window_len(), idx.len())?;
    Ok(g.value(out).data().to_vec())
}

/// Sum of squared errors over the shard and the gradient of
/// `SSE / total` with respect to every parameter.
fn shard_gradients(
    params: &BiClstmParams,
    config: &ModelConfig,
    batch: &WindowBatch,
    idx: &[usize],
    total: usize,
) -> Result<(f64, BiClstmParams)> {
    let mut g = Graph::new();
    let vars = params.map(|_, t| g.leaf(t.clone()));
    let x = g.leaf(gather_time_major(batch, idx));
    let y = g.leaf(Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| batch.labels[i]).collect())?);
    let pred = forward_graph(&mut g, &vars, config, x, batch.window_len(), idx.len())?;
    let diff = g.sub(pred, y)?;
    let sq = g.mul(diff, diff)?;
    let mean = g.reduce_mean(sq)?;
    let loss = g.mul_scalar(mean, idx.len() as f64 / total as f64);
    let sse = g.value(mean).item()? * idx.len() as f64;
    let mut grads = g.backward(loss)?;
    let mut leaves = vars.leaves().into_iter();
    let out = params.map(|_, t| {
        let v = *leaves.next().expect("one var per leaf");
        grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape()))
    });
    Ok((sse, out))
}

/// Mean-squared error of windows `idx` and its gradient. Must run inside the
/// worker pool if parallelism is wanted.
pub fn loss_and_gradients(
    params: &BiClstmParams,
    config: &ModelConfig,
    batch: &WindowBatch,
    idx: &[usize],
) -> Result<(f64, BiClstmParams)> {
    if idx.is_empty() {
        return Err(Error::Contract("gradient of an empty batch".into()));
    }
    let shards: Vec<(f64, BiClstmParams)> = idx
        .par_chunks(SHARD_SIZE)
        .map(|chunk| shard_gradients(params, config, batch, chunk, idx.len()))
        .collect::<Result<_>>()?;
    let mut shards = shards.into_iter();
    let (mut sse, mut total) = shards.next().expect("at least one shard");
    for (s, g) in shards {
        sse += s;
        let mut src = g.leaves().into_iter();
        total.for_each_mut(|_, t| {
            t.add_assign(src.next().expect("same structure"));
        });
    }
    Ok((sse / idx.len() as f64, total))
}

/// Raw model outputs on the normalized label scale, in window order.
pub fn predict_normalized(params: &BiClstmParams, config: &ModelConfig, batch: &WindowBatch) -> Result<Vec<f64>> {
    if batch.feature_dim() != config.input_dim {
        return Err(Error::Config(format!(
            "model expects {} features per step, windows have {}",
            config.input_dim,
            batch.feature_dim()
        )));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let parts: Vec<Vec<f64>> = idx
        .par_chunks(4 * SHARD_SIZE)
        .map(|chunk| forward_shard(params, config, batch, chunk))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// RUL in cycles: model output × 125, clamped to `[0, 125]`.
pub fn denormalize(raw: f64) -> f64 {
    (raw * RUL_CAP).clamp(0.0, RUL_CAP)
}

/// Per-window RUL predictions in cycles.
pub fn predict_batch(checkpoint: &Checkpoint, batch: &WindowBatch) -> Result<Vec<f64>> {
    let raw = in_worker_pool(|| predict_normalized(&checkpoint.params, &checkpoint.config, batch))??;
    Ok(raw.into_iter().map(denormalize).collect())
}

/// RMSE in cycles between clamped predictions and the batch labels.
fn rmse_cycles(params: &BiClstmParams, config: &ModelConfig, batch: &WindowBatch) -> Result<f64> {
    let raw = predict_normalized(params, config, batch)?;
    let sse: f64 = raw
        .iter()
        .zip(&batch.labels)
        .map(|(&p, &y)| {
            let d = denormalize(p) - y * RUL_CAP;
            d * d
        })
        .sum();
    Ok((sse / batch.len() as f64).sqrt())
}

/// Outcome of one epoch's validation check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a metric to be minimized.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> Verdict {
        if metric < self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_rmse: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,val_rmse_cycles\n");
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.train_mse, r.val_rmse).expect("string write");
    }
    out
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Set when training stopped on a non-finite loss or gradient; the
    /// checkpoint then holds the best parameters seen before that.
    pub diverged: Option<String>,
}

/// Trains from a fresh initialization of `model`, selecting the epoch with
/// the lowest validation RMSE.
pub fn train(model: &ModelConfig, train: &WindowBatch, val: &WindowBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_from(model, init_params(model), train, val, cfg)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    model: &ModelConfig,
    initial: BiClstmParams,
    train: &WindowBatch,
    val: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Contract(format!(
            "training needs nonempty splits, got {} train and {} validation windows",
            train.len(),
            val.len()
        )));
    }
    for b in [train, val] {
        if b.feature_dim() != model.input_dim {
            return Err(Error::Config(format!(
                "model expects {} features per step, windows have {}",
                model.input_dim,
                b.feature_dim()
            )));
        }
    }
    in_worker_pool(|| run(model, initial, train, val, cfg))?
}

fn run(
    model: &ModelConfig,
    mut params: BiClstmParams,
    train: &WindowBatch,
    val: &WindowBatch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stop_reason = "max_epochs";
    let mut diverged = None;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let step = loss_and_gradients(&params, model, train, idx)
                .and_then(|(loss, grads)| {
                    if !loss.is_finite() {
                        return Err(Error::Numerical(format!("training loss became {loss}")));
                    }
                    adam_step(&mut params, &grads, &mut adam, cfg)?;
                    Ok(loss)
                });
            match step {
                Ok(loss) => sse += loss * idx.len() as f64,
                Err(Error::Numerical(msg)) => {
                    diverged = Some(format!("epoch {epoch}: {msg}"));
                    stop_reason = "diverged";
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_mse = sse / train.len() as f64;
        let val_rmse = rmse_cycles(&params, model, val)?;
        history.push(EpochRecord {
            epoch,
            train_mse,
            val_rmse,
        });
        if !val_rmse.is_finite() {
            diverged = Some(format!("epoch {epoch}: validation RMSE became {val_rmse}"));
            stop_reason = "diverged";
            break;
        }
        match stopper.observe(epoch, val_rmse) {
            Verdict::Improved => best = params.clone(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stop_reason = "early_stopping";
                break;
            }
        }
    }

    let meta = TrainingMeta {
        epochs_run: history.len(),
        best_epoch: stopper.best_epoch,
        best_val_rmse: stopper.best,
        stop_reason: stop_reason.to_string(),
        train_config: serde_json::to_value(cfg)?,
    };
    let mut checkpoint = Checkpoint::new(model.clone(), best);
    checkpoint.training = Some(meta);
    Ok(TrainOutcome {
        checkpoint,
        history,
        diverged,
    })
}
