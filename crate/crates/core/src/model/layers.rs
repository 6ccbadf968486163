//! Graph-level building blocks. Sequences are laid out time-major as a
//! `(steps · batch) × width` matrix: rows `t·B .. (t+1)·B` hold time step `t`.

use super::params::{CorrectorParams, LstmCellParams, ProjectionParams};
use super::LAYER_NORM_EPS;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// `ReLU(x · W_pᵀ + b_p)` applied to every row.
pub fn project(g: &mut Graph, params: &ProjectionParams<Var>, x: Var) -> Result<Var> {
    let (_, f) = g.value(x).dims2()?;
    let (_, expected) = g.value(params.weight).dims2()?;
    if f != expected {
        return Err(Error::Config(format!(
            "projection expects {expected} input features, got {f}"
        )));
    }
    let lin = g.matmul_t(x, params.weight)?;
    let lin = g.add_bias(lin, params.bias)?;
    Ok(g.relu(lin))
}

/// One LSTM cell with its four gates fused into `4H`-row operands, gate
/// order input, forget, cell, output.
#[derive(Clone, Copy, Debug)]
pub struct FusedCell {
    pub input_weight: Var,
    pub recurrent_weight: Var,
    pub bias: Var,
    pub hidden: usize,
}

pub fn fuse_cell(g: &mut Graph, cell: &LstmCellParams<Var>) -> Result<FusedCell> {
    let gates = cell.gates();
    let hidden = g.value(gates[0].bias).len();
    let input_weight = g.concat(&gates.map(|p| p.input_weight), 0)?;
    let recurrent_weight = g.concat(&gates.map(|p| p.recurrent_weight), 0)?;
    let bias = g.concat(&gates.map(|p| p.bias), 0)?;
    Ok(FusedCell {
        input_weight,
        recurrent_weight,
        bias,
        hidden,
    })
}

/// `x · W_inᵀ + b` for every row; the input half of all gate
/// pre-activations.
pub fn input_preactivations(g: &mut Graph, cell: &FusedCell, x: Var) -> Result<Var> {
    let (_, d) = g.value(x).dims2()?;
    let (_, expected) = g.value(cell.input_weight).dims2()?;
    if d != expected {
        return Err(Error::Config(format!(
            "LSTM cell expects {expected} inputs, got {d}"
        )));
    }
    let z = g.matmul_t(x, cell.input_weight)?;
    g.add_bias(z, cell.bias)
}

/// One recurrence step. `preact` is this step's input pre-activation
/// (`B × 4H`); `state` is `(h, c)` or `None` for the zero state.
pub fn lstm_step(
    g: &mut Graph,
    cell: &FusedCell,
    preact: Var,
    state: Option<(Var, Var)>,
) -> Result<(Var, Var)> {
    let hd = cell.hidden;
    let z = match state {
        Some((h, _)) => {
            let rec = g.matmul_t(h, cell.recurrent_weight)?;
            g.add(preact, rec)?
        }
        None => preact,
    };
    let zi = g.narrow(z, 1, 0, hd)?;
    let zf = g.narrow(z, 1, hd, hd)?;
    let zg = g.narrow(z, 1, 2 * hd, hd)?;
    let zo = g.narrow(z, 1, 3 * hd, hd)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let fresh = g.mul(i, cand)?;
    let c = match state {
        Some((_, c_prev)) => {
            let kept = g.mul(f, c_prev)?;
            g.add(kept, fresh)?
        }
        // zero cell state: f ⊙ 0 vanishes
        None => fresh,
    };
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Runs a cell over a time-major sequence from the zero state and returns
/// the `(steps · batch) × H` hidden sequence in original time order.
pub fn lstm_sequence(
    g: &mut Graph,
    cell: &FusedCell,
    seq: Var,
    steps: usize,
    batch: usize,
    reverse: bool,
) -> Result<Var> {
    if steps == 0 || batch == 0 {
        return Err(Error::Contract("empty sequence".into()));
    }
    let (rows, _) = g.value(seq).dims2()?;
    if rows != steps * batch {
        return Err(Error::Dimension(format!(
            "sequence has {rows} rows, expected {steps} steps x {batch}"
        )));
    }
    let pre = input_preactivations(g, cell, seq)?;
    let mut outputs: Vec<Option<Var>> = vec![None; steps];
    let mut state = None;
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let pt = g.narrow(pre, 0, t * batch, batch)?;
        let (h, c) = lstm_step(g, cell, pt, state)?;
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    let outputs: Vec<Var> = outputs.into_iter().map(|v| v.expect("every step visited")).collect();
    g.concat(&outputs, 0)
}

/// Forward pass left to right and (optionally) backward pass right to left,
/// concatenated per step as `[h_fwd | h_bwd]`.
pub fn bilstm(
    g: &mut Graph,
    fwd: &FusedCell,
    bwd: Option<&FusedCell>,
    seq: Var,
    steps: usize,
    batch: usize,
) -> Result<Var> {
    let hf = lstm_sequence(g, fwd, seq, steps, batch, false)?;
    match bwd {
        Some(cell) => {
            let hb = lstm_sequence(g, cell, seq, steps, batch, true)?;
            g.concat(&[hf, hb], 1)
        }
        None => Ok(hf),
    }
}

/// `LayerNorm(h + FF₂(ReLU(FF₁([h | x]))))` row-wise; identity when the
/// block has no corrector.
pub fn correct(
    g: &mut Graph,
    params: Option<&CorrectorParams<Var>>,
    h: Var,
    x: Var,
) -> Result<Var> {
    let Some(p) = params else {
        return Ok(h);
    };
    let (_, hd) = g.value(h).dims2()?;
    let (_, xd) = g.value(x).dims2()?;
    let (_, expected) = g.value(p.hidden_weight).dims2()?;
    if hd + xd != expected {
        return Err(Error::Config(format!(
            "corrector expects {expected} inputs, got {hd} + {xd}"
        )));
    }
    let joined = g.concat(&[h, x], 1)?;
    let hidden = g.matmul_t(joined, p.hidden_weight)?;
    let hidden = g.add_bias(hidden, p.hidden_bias)?;
    let hidden = g.relu(hidden);
    let delta = g.matmul_t(hidden, p.out_weight)?;
    let delta = g.add_bias(delta, p.out_bias)?;
    let sum = g.add(h, delta)?;
    g.layer_norm(sum, p.norm_gain, p.norm_bias, LAYER_NORM_EPS)
}
