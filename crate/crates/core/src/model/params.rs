use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::tensor::Tensor;

// Every parameter struct is generic over its leaf type so the same layout
// serves for values (`Tensor`), graph handles (`Var`) and gradients.
// Weight matrices are stored `out × in`.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams<T = Tensor> {
    pub weight: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams<T = Tensor> {
    pub input_weight: T,
    pub recurrent_weight: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams<T = Tensor> {
    pub input_gate: GateParams<T>,
    pub forget_gate: GateParams<T>,
    pub cell_gate: GateParams<T>,
    pub output_gate: GateParams<T>,
}

/// Two-layer correction network over `concat(h_t, x_t)` plus the layer norm
/// applied to the corrected state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorParams<T = Tensor> {
    pub hidden_weight: T,
    pub hidden_bias: T,
    pub out_weight: T,
    pub out_bias: T,
    pub norm_gain: T,
    pub norm_bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams<T = Tensor> {
    pub forward: LstmCellParams<T>,
    pub backward: Option<LstmCellParams<T>>,
    pub corrector: Option<CorrectorParams<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T = Tensor> {
    pub weight: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiClstmParams<T = Tensor> {
    pub projection: ProjectionParams<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub head: HeadParams<T>,
}

impl<T> GateParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> GateParams<U> {
        GateParams {
            input_weight: f(&format!("{prefix}.input_weight"), &self.input_weight),
            recurrent_weight: f(&format!("{prefix}.recurrent_weight"), &self.recurrent_weight),
            bias: f(&format!("{prefix}.bias"), &self.bias),
        }
    }

    fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.input_weight"), &mut self.input_weight);
        f(&format!("{prefix}.recurrent_weight"), &mut self.recurrent_weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> LstmCellParams<T> {
    pub fn gates(&self) -> [&GateParams<T>; 4] {
        [
            &self.input_gate,
            &self.forget_gate,
            &self.cell_gate,
            &self.output_gate,
        ]
    }

    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> LstmCellParams<U> {
        LstmCellParams {
            input_gate: self.input_gate.map(&format!("{prefix}.input_gate"), f),
            forget_gate: self.forget_gate.map(&format!("{prefix}.forget_gate"), f),
            cell_gate: self.cell_gate.map(&format!("{prefix}.cell_gate"), f),
            output_gate: self.output_gate.map(&format!("{prefix}.output_gate"), f),
        }
    }

    fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        self.input_gate.for_each_mut(&format!("{prefix}.input_gate"), f);
        self.forget_gate.for_each_mut(&format!("{prefix}.forget_gate"), f);
        self.cell_gate.for_each_mut(&format!("{prefix}.cell_gate"), f);
        self.output_gate.for_each_mut(&format!("{prefix}.output_gate"), f);
    }
}

impl<T> CorrectorParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a T) -> U) -> CorrectorParams<U> {
        CorrectorParams {
            hidden_weight: f(&format!("{prefix}.corrector.hidden_weight"), &self.hidden_weight),
            hidden_bias: f(&format!("{prefix}.corrector.hidden_bias"), &self.hidden_bias),
            out_weight: f(&format!("{prefix}.corrector.out_weight"), &self.out_weight),
            out_bias: f(&format!("{prefix}.corrector.out_bias"), &self.out_bias),
            norm_gain: f(&format!("{prefix}.norm.gain"), &self.norm_gain),
            norm_bias: f(&format!("{prefix}.norm.bias"), &self.norm_bias),
        }
    }

    fn for_each_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.corrector.hidden_weight"), &mut self.hidden_weight);
        f(&format!("{prefix}.corrector.hidden_bias"), &mut self.hidden_bias);
        f(&format!("{prefix}.corrector.out_weight"), &mut self.out_weight);
        f(&format!("{prefix}.corrector.out_bias"), &mut self.out_bias);
        f(&format!("{prefix}.norm.gain"), &mut self.norm_gain);
        f(&format!("{prefix}.norm.bias"), &mut self.norm_bias);
    }
}

impl<T> BiClstmParams<T> {
    /// Builds a structurally identical parameter set, visiting leaves in
    /// canonical order with their dotted names.
    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&str, &'a T) -> U) -> BiClstmParams<U> {
        let f = &mut f;
        let projection = ProjectionParams {
            weight: f("projection.weight", &self.projection.weight),
            bias: f("projection.bias", &self.projection.bias),
        };
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let p = format!("block{k}");
                BlockParams {
                    forward: b.forward.map(&format!("{p}.fwd"), f),
                    backward: b.backward.as_ref().map(|c| c.map(&format!("{p}.bwd"), f)),
                    corrector: b.corrector.as_ref().map(|c| c.map(&p, f)),
                }
            })
            .collect();
        let head = HeadParams {
            weight: f("head.weight", &self.head.weight),
            bias: f("head.bias", &self.head.bias),
        };
        BiClstmParams {
            projection,
            blocks,
            head,
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut T)) {
        let f = &mut f;
        f("projection.weight", &mut self.projection.weight);
        f("projection.bias", &mut self.projection.bias);
        for (k, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("block{k}");
            b.forward.for_each_mut(&format!("{p}.fwd"), f);
            if let Some(c) = b.backward.as_mut() {
                c.for_each_mut(&format!("{p}.bwd"), f);
            }
            if let Some(c) = b.corrector.as_mut() {
                c.for_each_mut(&p, f);
            }
        }
        f("head.weight", &mut self.head.weight);
        f("head.bias", &mut self.head.bias);
    }

    pub fn for_each(&self, mut f: impl FnMut(&str, &T)) {
        self.map(|name, t| f(name, t));
    }

    /// Leaves in canonical order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.map(|_, t| out.push(t));
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|name, _| out.push(name.to_string()));
        out
    }
}

impl BiClstmParams<Tensor> {
    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.len());
        n
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_, t| Tensor::zeros(t.shape()))
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.is_finite());
        ok
    }
}

/// Parameter group for reporting: the dotted name without its last segment,
/// e.g. `block0.fwd.forget_gate` or `block1.norm`.
pub fn param_group(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(g, _)| g)
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound)
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

fn init_cell(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmCellParams {
    let mut gate = |bias: f64| GateParams {
        input_weight: uniform(rng, hidden, input),
        recurrent_weight: uniform(rng, hidden, hidden),
        bias: Tensor::filled(&[hidden], bias),
    };
    LstmCellParams {
        input_gate: gate(0.0),
        forget_gate: gate(1.0),
        cell_gate: gate(0.0),
        output_gate: gate(0.0),
    }
}

/// Seeded initialization: weights uniform in `±1/√fan_in`, biases zero
/// except the forget gate (1.0), layer-norm gains one.
pub fn init_params(config: &ModelConfig) -> BiClstmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let projection = ProjectionParams {
        weight: uniform(&mut rng, config.projection_dim, config.input_dim),
        bias: Tensor::zeros(&[config.projection_dim]),
    };
    let out_dim = config.block_output_dim();
    let blocks = (0..config.num_blocks)
        .map(|k| {
            let input = config.block_input_dim(k);
            let forward = init_cell(&mut rng, input, config.hidden_dim);
            let backward = config
                .bidirectional
                .then(|| init_cell(&mut rng, input, config.hidden_dim));
            let corrector = config.use_corrector.then(|| CorrectorParams {
                hidden_weight: uniform(&mut rng, config.corrector_hidden_dim, out_dim + input),
                hidden_bias: Tensor::zeros(&[config.corrector_hidden_dim]),
                out_weight: uniform(&mut rng, out_dim, config.corrector_hidden_dim),
                out_bias: Tensor::zeros(&[out_dim]),
                norm_gain: Tensor::filled(&[out_dim], 1.0),
                norm_bias: Tensor::zeros(&[out_dim]),
            });
            BlockParams {
                forward,
                backward,
                corrector,
            }
        })
        .collect();
    let head = HeadParams {
        weight: uniform(&mut rng, 1, config.head_width()),
        bias: Tensor::zeros(&[1]),
    };
    BiClstmParams {
        projection,
        blocks,
        head,
    }
}
