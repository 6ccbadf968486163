use super::layers::{self, fuse_cell};
use super::params::BiClstmParams;
use super::ModelConfig;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reorders a `B × W × F` window batch into the time-major
/// `(W · B) × F` layout the graph consumes.
pub fn windows_to_time_major(windows: &Tensor) -> Result<Tensor> {
    let [b, w, f] = match windows.shape() {
        &[b, w, f] => [b, w, f],
        s => {
            return Err(Error::Dimension(format!(
                "expected a B x W x F window batch, got {s:?}"
            )))
        }
    };
    let src = windows.data();
    let mut out = Vec::with_capacity(src.len());
    for t in 0..w {
        for i in 0..b {
            let from = (i * w + t) * f;
            out.extend_from_slice(&src[from..from + f]);
        }
    }
    Tensor::new(vec![w * b, f], out)
}

/// Records the full model on `g`. `input` is time-major `(steps · batch) × F`;
/// returns the `batch × 1` prediction node.
pub fn forward_graph(
    g: &mut Graph,
    params: &BiClstmParams<Var>,
    config: &ModelConfig,
    input: Var,
    steps: usize,
    batch: usize,
) -> Result<Var> {
    let (rows, f) = g.value(input).dims2()?;
    if f != config.input_dim {
        return Err(Error::Config(format!(
            "model expects {} features per step, window has {f}",
            config.input_dim
        )));
    }
    if rows != steps * batch || steps == 0 || batch == 0 {
        return Err(Error::Config(format!(
            "input has {rows} rows, expected {steps} steps x {batch} windows"
        )));
    }
    if params.blocks.len() != config.num_blocks {
        return Err(Error::Config(format!(
            "parameters hold {} blocks, config says {}",
            params.blocks.len(),
            config.num_blocks
        )));
    }

    let mut seq = layers::project(g, &params.projection, input)?;
    let mut summaries = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let fwd = fuse_cell(g, &block.forward)?;
        let bwd = match &block.backward {
            Some(cell) => Some(fuse_cell(g, cell)?),
            None => None,
        };
        let hidden = layers::bilstm(g, &fwd, bwd.as_ref(), seq, steps, batch)?;
        let corrected = layers::correct(g, block.corrector.as_ref(), hidden, seq)?;
        summaries.push(g.narrow(corrected, 0, (steps - 1) * batch, batch)?);
        seq = corrected;
    }
    let features = g.concat(&summaries, 1)?;
    let out = g.matmul_t(features, params.head.weight)?;
    g.add_bias(out, params.head.bias)
}

/// Predictions (normalized label scale) for a `B × W × F` batch.
pub fn forward_batch(
    params: &BiClstmParams,
    config: &ModelConfig,
    windows: &Tensor,
) -> Result<Vec<f64>> {
    let input = windows_to_time_major(windows)?;
    let (b, w) = (windows.shape()[0], windows.shape()[1]);
    let mut g = Graph::new();
    let vars = params.map(|_, t| g.leaf(t.clone()));
    let x = g.leaf(input);
    let out = forward_graph(&mut g, &vars, config, x, w, b)?;
    Ok(g.value(out).data().to_vec())
}

/// Prediction for a single `W × F` window.
pub fn forward(params: &BiClstmParams, config: &ModelConfig, window: &Tensor) -> Result<f64> {
    let (w, f) = window.dims2()?;
    let batch = window.reshape(&[1, w, f])?;
    Ok(forward_batch(params, config, &batch)?[0])
}
