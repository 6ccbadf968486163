//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Node ids grow monotonically and inputs always precede their consumers, so
//! a single descending sweep over the tape is a valid reverse topological
//! order. Graphs are rebuilt for every optimizer step.

use crate::error::{Error, Result};
use crate::tensor::{gemm_nt, gemm_tn, relu, sigmoid, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    AddScalar,
    MulScalar,
    Sigmoid,
    Tanh,
    Relu,
    AddBias,
    Concat,
    Narrow,
    Reshape,
    ReduceMean,
    LayerNorm,
}

/// Which operand (if any) of a binary op is a broadcast scalar.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    None,
    Lhs,
    Rhs,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    AddScalar(Var),
    MulScalar(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    AddBias(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { input: Var, axis: usize, start: usize },
    Reshape(Var),
    ReduceMean(Var),
    LayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::MulScalar(..) => OpKind::MulScalar,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Relu(_) => OpKind::Relu,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Concat { .. } => OpKind::Concat,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::Reshape(_) => OpKind::Reshape,
            Op::ReduceMean(_) => OpKind::ReduceMean,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<OpKind>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` is unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, inner)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Number of recorded nodes of the given kind.
    pub fn count(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Input node ids of `v`, in operand order.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b, _)
            | Op::Sub(a, b, _)
            | Op::Mul(a, b, _)
            | Op::AddBias(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Reshape(a)
            | Op::ReduceMean(a) => vec![*a],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Narrow { input, .. } => vec![*input],
            Op::LayerNorm {
                input, gain, bias, ..
            } => vec![*input, *gain, *bias],
        }
    }

    /// Negative-control hook: scales every backward contribution of `kind`
    /// by 1.5 so gradient checks can be shown to fail.
    #[doc(hidden)]
    pub fn corrupt_gradient_rule(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        Ok(self.push(Op::Transpose(a), value))
    }

    /// `a · bᵀ`, the usual dense-layer product for `out × in` weights.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let bt = self.transpose(b)?;
        self.matmul(a, bt)
    }

    fn broadcast_of(&self, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(Broadcast::None)
        } else if sa.is_empty() {
            Ok(Broadcast::Lhs)
        } else if sb.is_empty() {
            Ok(Broadcast::Rhs)
        } else {
            Err(Error::Dimension(format!(
                "elementwise operands {sa:?} and {sb:?}"
            )))
        }
    }

    fn binary_value(&self, a: Var, b: Var, bc: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        match bc {
            Broadcast::None => va.zip_map(vb, f).expect("shapes checked"),
            Broadcast::Lhs => {
                let s = va.data()[0];
                vb.map(|x| f(s, x))
            }
            Broadcast::Rhs => {
                let s = vb.data()[0];
                va.map(|x| f(x, s))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast_of(a, b)?;
        let value = self.binary_value(a, b, bc, |x, y| x + y);
        Ok(self.push(Op::Add(a, b, bc), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast_of(a, b)?;
        let value = self.binary_value(a, b, bc, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b, bc), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast_of(a, b)?;
        let value = self.binary_value(a, b, bc, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b, bc), value))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), value)
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(Op::MulScalar(a, c), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(relu);
        self.push(Op::Relu(a), value)
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let vb = self.value(bias);
        if vb.shape() != [n] {
            return Err(Error::Dimension(format!(
                "bias {:?} for rows of {:?}",
                vb.shape(),
                self.value(a).shape()
            )));
        }
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, b) in row.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(Op::AddBias(a, bias), value))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Dimension("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::Dimension(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Dimension(format!(
                    "concat along axis {axis} of {base:?} and {s:?}"
                )));
            }
            total += s[axis];
        }
        let (outer, inner) = outer_inner(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(input).shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::Dimension(format!(
                "narrow [{start}, {}) along axis {axis} of {shape:?}",
                start + len
            )));
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let dim = shape[axis];
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * dim + start) * inner;
            data.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(Op::Narrow { input, axis, start }, value))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), value))
    }

    pub fn reduce_mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(self.push(Op::ReduceMean(a), Tensor::scalar(mean)))
    }

    /// Row-wise layer normalization of an `m × n` matrix with population
    /// variance, followed by a per-column gain and bias.
    pub fn layer_norm(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.value(input).dims2()?;
        if n < 2 {
            return Err(Error::Contract(format!(
                "layer norm needs at least 2 features, got {n}"
            )));
        }
        let (g, b) = (self.value(gain), self.value(bias));
        if g.shape() != [n] || b.shape() != [n] {
            return Err(Error::Dimension(format!(
                "layer norm gain {:?} / bias {:?} for width {n}",
                g.shape(),
                b.shape()
            )));
        }
        let x = self.value(input).data();
        let mut normalized = vec![0.0; m * n];
        let mut out = vec![0.0; m * n];
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..n {
                let z = (row[j] - mean) * is;
                normalized[i * n + j] = z;
                out[i * n + j] = z * g.data()[j] + b.data()[j];
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        let normalized = Tensor::new(vec![m, n], normalized)?;
        Ok(self.push(
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            },
            value,
        ))
    }

    /// Reverse sweep from a single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            let scale = if self.fault == Some(node.op.kind()) {
                1.5
            } else {
                1.0
            };
            let mut contributions = self.local_grads(node, &upstream)?;
            if scale != 1.0 {
                for (_, g) in contributions.iter_mut() {
                    *g = g.map(|v| v * scale);
                }
            }
            for (target, g) in contributions {
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[id] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, up: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let out = &node.value;
        let g = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = va.dims2()?;
                let (_, n) = vb.dims2()?;
                let mut da = vec![0.0; m * k];
                gemm_nt(m, n, k, up.data(), vb.data(), &mut da);
                let mut db = vec![0.0; k * n];
                gemm_tn(m, k, n, va.data(), up.data(), &mut db);
                vec![
                    (*a, Tensor::new(vec![m, k], da)?),
                    (*b, Tensor::new(vec![k, n], db)?),
                ]
            }
            Op::Transpose(a) => vec![(*a, up.transpose()?)],
            Op::Add(a, b, bc) => self.binary_grads(*a, *b, *bc, up, |u, _, _| (u, u)),
            Op::Sub(a, b, bc) => self.binary_grads(*a, *b, *bc, up, |u, _, _| (u, -u)),
            Op::Mul(a, b, bc) => self.binary_grads(*a, *b, *bc, up, |u, x, y| (u * y, u * x)),
            Op::AddScalar(a) => vec![(*a, up.clone())],
            Op::MulScalar(a, c) => vec![(*a, up.map(|u| u * c))],
            Op::Sigmoid(a) => vec![(*a, up.zip_map(out, |u, s| u * s * (1.0 - s))?)],
            Op::Tanh(a) => vec![(*a, up.zip_map(out, |u, t| u * (1.0 - t * t))?)],
            Op::Relu(a) => {
                let x = self.value(*a);
                vec![(*a, up.zip_map(x, |u, v| if v > 0.0 { u } else { 0.0 })?)]
            }
            Op::AddBias(a, bias) => {
                let n = self.value(*bias).len();
                let mut db = vec![0.0; n];
                for row in up.data().chunks(n) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*a, up.clone()), (*bias, Tensor::vector(db))]
            }
            Op::Concat { inputs, axis } => {
                let (outer, inner) = outer_inner(out.shape(), *axis);
                let total = out.shape()[*axis];
                let mut offset = 0;
                let mut res = Vec::with_capacity(inputs.len());
                for &v in inputs {
                    let shape = self.value(v).shape().to_vec();
                    let len = shape[*axis];
                    let mut data = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let from = (o * total + offset) * inner;
                        data.extend_from_slice(&up.data()[from..from + len * inner]);
                    }
                    offset += len;
                    res.push((v, Tensor::new(shape, data)?));
                }
                res
            }
            Op::Narrow { input, axis, start } => {
                let shape = self.value(*input).shape().to_vec();
                let (outer, inner) = outer_inner(&shape, *axis);
                let dim = shape[*axis];
                let len = out.shape()[*axis];
                let mut data = vec![0.0; shape.iter().product()];
                for o in 0..outer {
                    let to = (o * dim + start) * inner;
                    let from = o * len * inner;
                    data[to..to + len * inner].copy_from_slice(&up.data()[from..from + len * inner]);
                }
                vec![(*input, Tensor::new(shape, data)?)]
            }
            Op::Reshape(a) => vec![(*a, up.reshape(self.value(*a).shape())?)],
            Op::ReduceMean(a) => {
                let t = self.value(*a);
                let share = up.data()[0] / t.len() as f64;
                vec![(*a, Tensor::filled(t.shape(), share))]
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (m, n) = normalized.dims2()?;
                let gv = self.value(*gain).data();
                let mut dx = vec![0.0; m * n];
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                let mut dz = vec![0.0; n];
                for i in 0..m {
                    let u = &up.data()[i * n..(i + 1) * n];
                    let z = &normalized.data()[i * n..(i + 1) * n];
                    let mut mean_dz = 0.0;
                    let mut mean_dz_z = 0.0;
                    for j in 0..n {
                        dg[j] += u[j] * z[j];
                        db[j] += u[j];
                        dz[j] = u[j] * gv[j];
                        mean_dz += dz[j];
                        mean_dz_z += dz[j] * z[j];
                    }
                    mean_dz /= n as f64;
                    mean_dz_z /= n as f64;
                    for j in 0..n {
                        dx[i * n + j] = inv_std[i] * (dz[j] - mean_dz - z[j] * mean_dz_z);
                    }
                }
                vec![
                    (*input, Tensor::new(vec![m, n], dx)?),
                    (*gain, Tensor::vector(dg)),
                    (*bias, Tensor::vector(db)),
                ]
            }
        };
        Ok(g)
    }

    fn binary_grads(
        &self,
        a: Var,
        b: Var,
        bc: Broadcast,
        up: &Tensor,
        rule: impl Fn(f64, f64, f64) -> (f64, f64),
    ) -> Vec<(Var, Tensor)> {
        let (va, vb) = (self.value(a), self.value(b));
        let n = up.len();
        let lhs = |i: usize| match bc {
            Broadcast::Lhs => va.data()[0],
            _ => va.data()[i],
        };
        let rhs = |i: usize| match bc {
            Broadcast::Rhs => vb.data()[0],
            _ => vb.data()[i],
        };
        let mut ga = vec![0.0; va.len()];
        let mut gb = vec![0.0; vb.len()];
        for i in 0..n {
            let (da, db) = rule(up.data()[i], lhs(i), rhs(i));
            match bc {
                Broadcast::Lhs => ga[0] += da,
                _ => ga[i] = da,
            }
            match bc {
                Broadcast::Rhs => gb[0] += db,
                _ => gb[i] = db,
            }
        }
        vec![
            (a, Tensor::new(va.shape().to_vec(), ga).expect("shape preserved")),
            (b, Tensor::new(vb.shape().to_vec(), gb).expect("shape preserved")),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn relu_forward_and_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.reduce_mean(y).unwrap();
        let grads = g.backward(s).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, third]);
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0));
        let s = g.sigmoid(x);
        let t = g.tanh(x);
        assert_eq!(g.value(s).item().unwrap(), 0.5);
        assert_eq!(g.value(t).item().unwrap(), 0.0);
    }

    #[test]
    fn concat_columns() {
        let mut g = Graph::new();
        let a = g.leaf(m(&[&[1.0], &[2.0]]));
        let b = g.leaf(m(&[&[3.0], &[4.0]]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c), &m(&[&[1.0, 3.0], &[2.0, 4.0]]));
        let single = g.concat(&[a], 1).unwrap();
        assert_eq!(g.value(single), g.value(a));
    }

    #[test]
    fn concat_rejects_incompatible_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 1]));
        let b = g.leaf(Tensor::zeros(&[3, 1]));
        assert!(matches!(g.concat(&[a, b], 1), Err(Error::Dimension(_))));
        assert!(g.concat(&[a, b], 0).is_ok());
    }

    #[test]
    fn concat_then_narrow_recovers_pieces() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let b = g.leaf(Tensor::new(vec![2, 1, 2], vec![-1.0, -2.0, -3.0, -4.0]).unwrap());
        let c = g.concat(&[a, b], 1).unwrap();
        let a2 = g.narrow(c, 1, 0, 3).unwrap();
        let b2 = g.narrow(c, 1, 3, 1).unwrap();
        assert_eq!(g.value(a2), g.value(a));
        assert_eq!(g.value(b2), g.value(b));
    }

    #[test]
    fn mean_values() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![2.0, 2.0, 2.0]));
        let b = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let ma = g.reduce_mean(a).unwrap();
        let mb = g.reduce_mean(b).unwrap();
        assert_eq!(g.value(ma).item().unwrap(), 2.0);
        assert_eq!(g.value(mb).item().unwrap(), 2.0);
        let e = g.leaf(Tensor::zeros(&[0]));
        assert!(matches!(g.reduce_mean(e), Err(Error::Domain(_))));
    }

    #[test]
    fn mean_of_square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.reduce_mean(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn loss_is_parameter() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::scalar(3.5));
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(p).unwrap().item().unwrap(), 1.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn no_implicit_broadcasting() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[3]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
        let s = g.leaf(Tensor::scalar(2.0));
        let c = g.mul(a, s).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 3]);
    }

    #[test]
    fn scalar_operand_gradient_is_summed() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = g.leaf(Tensor::scalar(2.0));
        let p = g.mul(s, a).unwrap();
        let loss = g.reduce_mean(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!((grads.get(s).unwrap().item().unwrap() - 2.0).abs() < 1e-15);
        let two_thirds = 2.0 / 3.0;
        assert_eq!(grads.get(a).unwrap().data(), &[two_thirds; 3]);
    }

    #[test]
    fn fan_out_accumulates() {
        // y = mean(x * 3 + x * 5) => dy/dx = 8 / n
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.3, -0.7]));
        let a = g.mul_scalar(x, 3.0);
        let b = g.mul_scalar(x, 5.0);
        let s = g.add(a, b).unwrap();
        let loss = g.reduce_mean(s).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn inputs_precede_consumers() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 2]));
        let b = g.leaf(Tensor::eye(2));
        let c = g.matmul(a, b).unwrap();
        let d = g.tanh(c);
        let e = g.concat(&[d, a], 0).unwrap();
        for v in [c, d, e] {
            assert!(g.inputs(v).iter().all(|i| i.id() < v.id()));
        }
    }

    #[test]
    fn layer_norm_rejects_single_feature() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[3, 1]));
        let gain = g.leaf(Tensor::filled(&[1], 1.0));
        let bias = g.leaf(Tensor::zeros(&[1]));
        assert!(matches!(
            g.layer_norm(x, gain, bias, 1e-5),
            Err(Error::Contract(_))
        ));
    }
}
