//! Value-level entry points for single vectors and sequences. Each call
//! records a throwaway graph over the same layers the model uses.

use super::layers::{self, fuse_cell};
use super::params::{CorrectorParams, LstmCellParams, ProjectionParams};
use super::LAYER_NORM_EPS;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

fn row(g: &mut Graph, v: &[f64]) -> Var {
    g.leaf(Tensor::new(vec![1, v.len()], v.to_vec()).expect("row shape"))
}

pub fn project(params: &ProjectionParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = ProjectionParams {
        weight: g.leaf(params.weight.clone()),
        bias: g.leaf(params.bias.clone()),
    };
    let xv = row(&mut g, x);
    let out = layers::project(&mut g, &p, xv)?;
    Ok(g.value(out).data().to_vec())
}

fn bind_cell(g: &mut Graph, cell: &LstmCellParams) -> LstmCellParams<Var> {
    let gate = |g: &mut Graph, p: &super::GateParams| super::GateParams {
        input_weight: g.leaf(p.input_weight.clone()),
        recurrent_weight: g.leaf(p.recurrent_weight.clone()),
        bias: g.leaf(p.bias.clone()),
    };
    LstmCellParams {
        input_gate: gate(g, &cell.input_gate),
        forget_gate: gate(g, &cell.forget_gate),
        cell_gate: gate(g, &cell.cell_gate),
        output_gate: gate(g, &cell.output_gate),
    }
}

pub fn lstm_step(params: &LstmCellParams, input: &[f64], state: &LstmState) -> Result<LstmState> {
    let hidden = params.input_gate.bias.len();
    if state.h.len() != hidden || state.c.len() != hidden {
        return Err(Error::Config(format!(
            "state width {}/{} for a cell of width {hidden}",
            state.h.len(),
            state.c.len()
        )));
    }
    let mut g = Graph::new();
    let cell = bind_cell(&mut g, params);
    let fused = fuse_cell(&mut g, &cell)?;
    let x = row(&mut g, input);
    let h = row(&mut g, &state.h);
    let c = row(&mut g, &state.c);
    let pre = layers::input_preactivations(&mut g, &fused, x)?;
    let (h2, c2) = layers::lstm_step(&mut g, &fused, pre, Some((h, c)))?;
    Ok(LstmState {
        h: g.value(h2).data().to_vec(),
        c: g.value(c2).data().to_vec(),
    })
}

/// Runs `fwd` left to right and `bwd` (when given) right to left over a
/// `W × d` sequence; returns `W × (D·H)`.
pub fn bilstm_forward(
    fwd: &LstmCellParams,
    bwd: Option<&LstmCellParams>,
    seq: &Tensor,
) -> Result<Tensor> {
    let (steps, _) = seq.dims2()?;
    if steps == 0 {
        return Err(Error::Contract("bidirectional LSTM over an empty sequence".into()));
    }
    let mut g = Graph::new();
    let f = bind_cell(&mut g, fwd);
    let f = fuse_cell(&mut g, &f)?;
    let b = match bwd {
        Some(cell) => {
            let c = bind_cell(&mut g, cell);
            Some(fuse_cell(&mut g, &c)?)
        }
        None => None,
    };
    let x = g.leaf(seq.clone());
    let out = layers::bilstm(&mut g, &f, b.as_ref(), x, steps, 1)?;
    Ok(g.value(out).clone())
}

pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = row(&mut g, v);
    let gn = g.leaf(Tensor::vector(gain.to_vec()));
    let bs = g.leaf(Tensor::vector(bias.to_vec()));
    let out = g.layer_norm(x, gn, bs, LAYER_NORM_EPS)?;
    Ok(g.value(out).data().to_vec())
}

/// Corrected hidden state for one step; `params = None` is the identity used
/// by the uncorrected variants.
pub fn correct(params: Option<&CorrectorParams>, h: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let p = params.map(|p| CorrectorParams {
        hidden_weight: g.leaf(p.hidden_weight.clone()),
        hidden_bias: g.leaf(p.hidden_bias.clone()),
        out_weight: g.leaf(p.out_weight.clone()),
        out_bias: g.leaf(p.out_bias.clone()),
        norm_gain: g.leaf(p.norm_gain.clone()),
        norm_bias: g.leaf(p.norm_bias.clone()),
    });
    let hv = row(&mut g, h);
    let xv = row(&mut g, x);
    let out = layers::correct(&mut g, p.as_ref(), hv, xv)?;
    Ok(g.value(out).data().to_vec())
}
