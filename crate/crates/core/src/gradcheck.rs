//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, OpKind, Var};
use crate::error::{Error, Result};
use crate::model::{forward_graph, init_params, param_group, windows_to_time_major, ModelConfig};
use crate::tensor::Tensor;

/// Step used for central differences.
pub const FD_EPSILON: f64 = 1e-5;

/// Denominator floor for relative errors; gradients smaller than this are
/// compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Per-input result of a gradient check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub max_rel_err: Vec<f64>,
    pub analytic: Vec<Tensor>,
}

impl CheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_err.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of `build` against central differences for
/// every entry of every input tensor.
///
/// `build` receives a fresh graph and leaf handles for `inputs` (in order) and
/// must return a scalar loss node.
pub fn check<F>(inputs: &[Tensor], build: F) -> Result<CheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();

    let mut work = inputs.to_vec();
    let mut max_rel_err = Vec::with_capacity(inputs.len());
    for (idx, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..work[idx].len() {
            let orig = work[idx].data()[j];
            work[idx].data_mut()[j] = orig + FD_EPSILON;
            let plus = eval(&work)?;
            work[idx].data_mut()[j] = orig - FD_EPSILON;
            let minus = eval(&work)?;
            work[idx].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_EPSILON);
            if !numeric.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite finite difference for input {idx} entry {j}"
                )));
            }
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
        max_rel_err.push(worst);
    }
    Ok(CheckReport {
        max_rel_err,
        analytic,
    })
}

/// Maximum relative error for one named parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
}

/// Finite-difference check of the full model's MSE gradient on random
/// windows and targets, aggregated by parameter group.
pub fn check_model(
    config: &ModelConfig,
    steps: usize,
    batch: usize,
    data_seed: u64,
    fault: Option<OpKind>,
) -> Result<Vec<GroupError>> {
    config.validate()?;
    let params = init_params(config);
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let n = batch * steps * config.input_dim;
    let windows = Tensor::new(
        vec![batch, steps, config.input_dim],
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    )?;
    let input = windows_to_time_major(&windows)?;
    let targets = Tensor::new(
        vec![batch, 1],
        (0..batch).map(|_| rng.random::<f64>()).collect(),
    )?;

    let names = params.names();
    let inputs: Vec<Tensor> = params.leaves().into_iter().cloned().collect();
    let template = params.clone();
    let build = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
        g.corrupt_gradient_rule(fault);
        let mut it = vars.iter().copied();
        let bound = template.map(|_, _| it.next().expect("one var per leaf"));
        let x = g.leaf(input.clone());
        let y = g.leaf(targets.clone());
        let pred = forward_graph(g, &bound, config, x, steps, batch)?;
        let diff = g.sub(pred, y)?;
        let sq = g.mul(diff, diff)?;
        g.reduce_mean(sq)
    };
    let report = check(&inputs, build)?;

    let mut groups: Vec<GroupError> = Vec::new();
    for ((name, err), grad) in names.iter().zip(&report.max_rel_err).zip(&report.analytic) {
        let group = param_group(name);
        match groups.iter_mut().find(|g| g.group == group) {
            Some(g) => {
                g.max_rel_err = g.max_rel_err.max(*err);
                g.max_abs_grad = g.max_abs_grad.max(grad.max_abs());
            }
            None => groups.push(GroupError {
                group: group.to_string(),
                max_rel_err: *err,
                max_abs_grad: grad.max_abs(),
            }),
        }
    }
    Ok(groups)
}
