//! Model-level oracles: every layer is re-evaluated with plain loops over
//! `Vec<f64>` and compared against the graph implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rul_forge::autodiff::{Graph, OpKind};
use rul_forge::model::ops::{self, LstmState};
use rul_forge::model::{
    forward, forward_batch, forward_graph, init_params, windows_to_time_major, BiClstmParams,
    CorrectorParams, LstmCellParams, ModelConfig, ProjectionParams, Variant,
};
use rul_forge::tensor::Tensor;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect(),
    )
    .unwrap()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W v` for an `out × in` row-major matrix.
fn matvec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(cols, v.len());
    (0..rows)
        .map(|r| (0..cols).map(|c| w.data()[r * cols + c] * v[c]).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn oracle_step(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let gate = |g: &rul_forge::model::GateParams| {
        add(&add(&matvec(&g.input_weight, x), &matvec(&g.recurrent_weight, h)), g.bias.data())
    };
    let i: Vec<f64> = gate(&p.input_gate).into_iter().map(sig).collect();
    let f: Vec<f64> = gate(&p.forget_gate).into_iter().map(sig).collect();
    let g: Vec<f64> = gate(&p.cell_gate).into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = gate(&p.output_gate).into_iter().map(sig).collect();
    let c2: Vec<f64> = (0..c.len()).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let h2 = (0..c.len()).map(|k| o[k] * c2[k].tanh()).collect();
    (h2, c2)
}

fn oracle_layer_norm(v: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    v.iter()
        .enumerate()
        .map(|(k, x)| (x - mean) / (var + 1e-5).sqrt() * gain[k] + bias[k])
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

fn small_config(variant: Variant, blocks: usize) -> ModelConfig {
    let mut c = ModelConfig::new(3).with_variant(variant);
    c.projection_dim = 5;
    c.hidden_dim = 4;
    c.num_blocks = blocks;
    c.corrector_hidden_dim = 3;
    c.seed = 11;
    c
}

fn random_cell(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmCellParams {
    let cfg = {
        let mut c = ModelConfig::new(input).with_variant(Variant::Lstm);
        c.projection_dim = input;
        c.hidden_dim = hidden;
        c.num_blocks = 1;
        c.seed = rng.random();
        c
    };
    init_params(&cfg).blocks.remove(0).forward
}

#[test]
fn projection_cases() {
    let zero = ProjectionParams {
        weight: Tensor::zeros(&[3, 2]),
        bias: Tensor::zeros(&[3]),
    };
    assert_eq!(ops::project(&zero, &[4.0, -2.0]).unwrap(), vec![0.0; 3]);

    let ident = ProjectionParams {
        weight: Tensor::eye(2),
        bias: Tensor::zeros(&[2]),
    };
    assert_eq!(ops::project(&ident, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ProjectionParams {
        weight: rand_tensor(&mut rng, &[6, 4], 1.0),
        bias: rand_tensor(&mut rng, &[6], 1.0),
    };
    let x = [0.3, -1.2, 0.7, 2.0];
    let expect: Vec<f64> = add(&matvec(&p.weight, &x), p.bias.data())
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let got = ops::project(&p, &x).unwrap();
    close(&got, &expect, 1e-12);
    assert!(got.iter().all(|&v| v >= 0.0));
    assert!(ops::project(&p, &[1.0, 2.0]).is_err());
}

#[test]
fn lstm_step_zero_params_give_zero_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cell = random_cell(&mut rng, 3, 2);
    for g in [
        &mut cell.input_gate,
        &mut cell.forget_gate,
        &mut cell.cell_gate,
        &mut cell.output_gate,
    ] {
        g.input_weight = Tensor::zeros(g.input_weight.shape());
        g.recurrent_weight = Tensor::zeros(g.recurrent_weight.shape());
        g.bias = Tensor::zeros(g.bias.shape());
    }
    let s = ops::lstm_step(&cell, &[1.0, -2.0, 3.0], &LstmState::zeros(2)).unwrap();
    assert_eq!(s.h, vec![0.0, 0.0]);
    assert_eq!(s.c, vec![0.0, 0.0]);
}

#[test]
fn lstm_step_scalar_hand_computed() {
    // H = 1, one input. Gate pre-activations with x = 1, h = 0.5, c = 0.2:
    //   i: 0.5*1 + 1.0*0.5 + 0   = 1.0
    //   f: 0.0*1 + 0.0*0.5 + 1.0 = 1.0
    //   g: 1.0*1 + (-1)*0.5 + 0  = 0.5
    //   o: -1*1  + 0*0.5 + 0.5   = -0.5
    let gate = |w: f64, u: f64, b: f64| rul_forge::model::GateParams {
        input_weight: Tensor::new(vec![1, 1], vec![w]).unwrap(),
        recurrent_weight: Tensor::new(vec![1, 1], vec![u]).unwrap(),
        bias: Tensor::vector(vec![b]),
    };
    let cell = LstmCellParams {
        input_gate: gate(0.5, 1.0, 0.0),
        forget_gate: gate(0.0, 0.0, 1.0),
        cell_gate: gate(1.0, -1.0, 0.0),
        output_gate: gate(-1.0, 0.0, 0.5),
    };
    let state = LstmState {
        h: vec![0.5],
        c: vec![0.2],
    };
    let out = ops::lstm_step(&cell, &[1.0], &state).unwrap();
    let (i, f, g, o) = (sig(1.0), sig(1.0), 0.5f64.tanh(), sig(-0.5));
    let c = f * 0.2 + i * g;
    let h = o * c.tanh();
    assert!((out.c[0] - c).abs() < 1e-15);
    assert!((out.h[0] - h).abs() < 1e-15);
    // pen-and-paper values
    assert!((out.c[0] - 0.4840464).abs() < 1e-6);
    assert!((out.h[0] - 0.1696964).abs() < 1e-6);
}

#[test]
fn lstm_cell_state_growth_is_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let cell = random_cell(&mut rng, 4, 5);
        let state = LstmState {
            h: (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            c: (0..5).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect(),
        };
        let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let next = ops::lstm_step(&cell, &x, &state).unwrap();
        for k in 0..5 {
            assert!(next.c[k].abs() <= state.c[k].abs() + 1.0);
        }
        let (h2, c2) = oracle_step(&cell, &x, &state.h, &state.c);
        close(&next.h, &h2, 1e-12);
        close(&next.c, &c2, 1e-12);
    }
}

#[test]
fn bilstm_single_step_is_two_one_step_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, b) = (random_cell(&mut rng, 3, 2), random_cell(&mut rng, 3, 2));
    let seq = rand_tensor(&mut rng, &[1, 3], 1.0);
    let out = ops::bilstm_forward(&a, Some(&b), &seq).unwrap();
    let ha = ops::lstm_step(&a, seq.data(), &LstmState::zeros(2)).unwrap().h;
    let hb = ops::lstm_step(&b, seq.data(), &LstmState::zeros(2)).unwrap().h;
    close(out.data(), &[ha, hb].concat(), 1e-14);
}

fn reverse_rows(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let data = (0..r).rev().flat_map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect();
    Tensor::new(vec![r, c], data).unwrap()
}

fn swap_halves(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let h = c / 2;
    let data = (0..r)
        .flat_map(|i| {
            let row = &t.data()[i * c..(i + 1) * c];
            [&row[h..], &row[..h]].concat()
        })
        .collect();
    Tensor::new(vec![r, c], data).unwrap()
}

#[test]
fn bilstm_reversal_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (a, b) = (random_cell(&mut rng, 3, 4), random_cell(&mut rng, 3, 4));
    let seq = rand_tensor(&mut rng, &[5, 3], 1.5);
    let lhs = ops::bilstm_forward(&a, Some(&b), &reverse_rows(&seq)).unwrap();
    let rhs = reverse_rows(&swap_halves(&ops::bilstm_forward(&b, Some(&a), &seq).unwrap()));
    close(lhs.data(), rhs.data(), 1e-14);
}

#[test]
fn unidirectional_is_forward_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b) = (random_cell(&mut rng, 3, 4), random_cell(&mut rng, 3, 4));
    let seq = rand_tensor(&mut rng, &[6, 3], 1.0);
    let uni = ops::bilstm_forward(&a, None, &seq).unwrap();
    let bi = ops::bilstm_forward(&a, Some(&b), &seq).unwrap();
    assert_eq!(uni.shape(), &[6, 4]);
    for t in 0..6 {
        assert_eq!(uni.row(t), &bi.row(t)[..4]);
    }
    // step-by-step oracle for the forward direction
    let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
    for t in 0..6 {
        (h, c) = oracle_step(&a, seq.row(t), &h, &c);
        close(uni.row(t), &h, 1e-12);
    }
    assert!(ops::bilstm_forward(&a, None, &Tensor::zeros(&[0, 3])).is_err());
}

#[test]
fn layer_norm_cases() {
    let out = ops::layer_norm(&[1.0, 2.0, 3.0], &[1.0; 3], &[0.0; 3]).unwrap();
    let sd = (2.0f64 / 3.0 + 1e-5).sqrt();
    close(&out, &[-1.0 / sd, 0.0, 1.0 / sd], 1e-15);
    close(&out, &[-1.22474, 0.0, 1.22474], 1e-4);

    let flat = ops::layer_norm(&[4.2; 5], &[1.0; 5], &[0.0; 5]).unwrap();
    assert!(flat.iter().all(|v| v.abs() < 1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let v: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 10.0 - 3.0).collect();
        let out = ops::layer_norm(&v, &[1.0; 16], &[0.0; 16]).unwrap();
        let mean = out.iter().sum::<f64>() / 16.0;
        let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
    assert!(ops::layer_norm(&[1.0], &[1.0], &[0.0]).is_err());
}

fn random_corrector(rng: &mut ChaCha8Rng, hd: usize, xd: usize, c: usize) -> CorrectorParams {
    CorrectorParams {
        hidden_weight: rand_tensor(rng, &[c, hd + xd], 0.7),
        hidden_bias: rand_tensor(rng, &[c], 0.3),
        out_weight: rand_tensor(rng, &[hd, c], 0.7),
        out_bias: rand_tensor(rng, &[hd], 0.3),
        norm_gain: rand_tensor(rng, &[hd], 1.0),
        norm_bias: rand_tensor(rng, &[hd], 0.5),
    }
}

#[test]
fn corrector_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = [0.3, -0.1, 0.8, 0.05];
    let x = [1.0, -2.0, 0.5];

    let mut p = random_corrector(&mut rng, 4, 3, 5);
    // composition oracle: FF₂(ReLU(FF₁([h|x]))) then residual and norm
    let joined = [h.as_slice(), x.as_slice()].concat();
    let hidden: Vec<f64> = add(&matvec(&p.hidden_weight, &joined), p.hidden_bias.data())
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let delta = add(&matvec(&p.out_weight, &hidden), p.out_bias.data());
    let expect = oracle_layer_norm(&add(&h, &delta), p.norm_gain.data(), p.norm_bias.data());
    close(&ops::correct(Some(&p), &h, &x).unwrap(), &expect, 1e-12);

    assert_eq!(ops::correct(None, &h, &x).unwrap(), h.to_vec());

    p.hidden_weight = Tensor::zeros(p.hidden_weight.shape());
    p.hidden_bias = Tensor::zeros(p.hidden_bias.shape());
    p.out_weight = Tensor::zeros(p.out_weight.shape());
    p.out_bias = Tensor::zeros(p.out_bias.shape());
    let ln = ops::layer_norm(&h, p.norm_gain.data(), p.norm_bias.data()).unwrap();
    assert_eq!(ops::correct(Some(&p), &h, &x).unwrap(), ln);

    assert!(ops::correct(Some(&p), &h, &x[..2]).is_err());
}

fn zero_params(cfg: &ModelConfig) -> BiClstmParams {
    init_params(cfg).zeros_like()
}

#[test]
fn constant_head_predicts_bias() {
    for v in Variant::ALL {
        let cfg = small_config(v, 2);
        let mut p = zero_params(&cfg);
        p.head.bias = Tensor::vector(vec![7.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = rand_tensor(&mut rng, &[4, 3], 2.0);
        assert_eq!(forward(&p, &cfg, &w).unwrap(), 7.0);
    }
}

#[test]
fn single_block_lstm_matches_unrolled_oracle() {
    let cfg = small_config(Variant::Lstm, 1);
    let p = init_params(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let window = rand_tensor(&mut rng, &[3, 3], 1.0);

    let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
    for t in 0..3 {
        let z: Vec<f64> = add(&matvec(&p.projection.weight, window.row(t)), p.projection.bias.data())
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        (h, c) = oracle_step(&p.blocks[0].forward, &z, &h, &c);
    }
    let expect = matvec(&p.head.weight, &h)[0] + p.head.bias.data()[0];
    let got = forward(&p, &cfg, &window).unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn batch_equals_loop() {
    for v in Variant::ALL {
        let cfg = small_config(v, 2);
        let p = init_params(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch = rand_tensor(&mut rng, &[5, 4, 3], 1.0);
        let preds = forward_batch(&p, &cfg, &batch).unwrap();
        for (b, pred) in preds.iter().enumerate() {
            let w = Tensor::new(vec![4, 3], batch.data()[b * 12..(b + 1) * 12].to_vec()).unwrap();
            let single = forward(&p, &cfg, &w).unwrap();
            assert!((single - pred).abs() < 1e-12);
        }
    }
}

#[test]
fn variants_build_distinct_graphs() {
    let mut signatures = Vec::new();
    for v in Variant::ALL {
        let cfg = small_config(v, 2);
        let params = init_params(&cfg);
        let mut g = Graph::new();
        let vars = params.map(|_, t| g.leaf(t.clone()));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let batch = rand_tensor(&mut rng, &[2, 4, 3], 1.0);
        let x = g.leaf(windows_to_time_major(&batch).unwrap());
        forward_graph(&mut g, &vars, &cfg, x, 4, 2).unwrap();
        let norms = g.count(OpKind::LayerNorm);
        if cfg.use_corrector {
            assert_eq!(norms, 2);
        } else {
            assert_eq!(norms, 0);
            assert_eq!(g.count(OpKind::Relu), 1, "only the projection ReLU");
        }
        signatures.push((g.len(), norms, g.count(OpKind::Sigmoid)));
    }
    signatures.sort();
    signatures.dedup();
    assert_eq!(signatures.len(), 4);
}

#[test]
fn forward_rejects_wrong_width() {
    let cfg = small_config(Variant::BiCLstm, 1);
    let p = init_params(&cfg);
    assert!(matches!(
        forward(&p, &cfg, &Tensor::zeros(&[4, 5])),
        Err(rul_forge::Error::Config(_))
    ));
}

#[test]
fn temporal_order_matters() {
    for v in Variant::ALL {
        let cfg = small_config(v, 2);
        let p = init_params(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let w = rand_tensor(&mut rng, &[6, 3], 1.0);
            let a = forward(&p, &cfg, &w).unwrap();
            let b = forward(&p, &cfg, &reverse_rows(&w)).unwrap();
            assert_ne!(a, b);
        }
    }
}
