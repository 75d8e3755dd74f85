mod common;

use std::sync::Arc;

use common::*;
use nfmpc::diffnet::{
    adam_step, layer_norm_apply, layer_norm_backward, lstm_step, mlp_apply, mlp_backward, read_params, write_params,
    Activation, AdamConfig, GradientRecord, LayerSpec, LayoutBuilder, LstmCell, LstmState, Mlp, Moments, NetworkSpec,
    ParamVector,
};
use proptest::prelude::*;
use rand::Rng;

fn random_params(builder: LayoutBuilder, seed: u64, scale: f64) -> ParamVector {
    let layout = Arc::new(builder.finish());
    let mut r = rng(seed);
    let values = normal_vec(&mut r, layout.total(), scale);
    ParamVector::from_values(layout, values).unwrap()
}

fn with_values(p: &ParamVector, v: &[f64]) -> ParamVector {
    ParamVector::from_values(Arc::clone(p.layout()), v.to_vec()).unwrap()
}

fn mixed_spec(input: usize, seed: u64) -> NetworkSpec {
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let mut r = rng(seed);
    let layers = (0..3)
        .map(|i| LayerSpec {
            size: r.random_range(2..6),
            activation: if i == 2 { Activation::Identity } else { acts[r.random_range(0..3)] },
            layer_norm: i < 2 && r.random_bool(0.5),
        })
        .collect();
    NetworkSpec { input, layers }
}

#[test]
fn mlp_matches_straight_line_evaluation() {
    for seed in 0..20u64 {
        let spec = NetworkSpec::hidden_stack(3, 4, 2, 2, Activation::Tanh, false);
        let mut b = LayoutBuilder::default();
        let net = Mlp::register(spec, &mut b, "net").unwrap();
        let p = random_params(b, seed, 0.8);
        let x = normal_vec(&mut rng(seed + 99), 3, 1.0);

        let dense = |w: &[f64], bias: &[f64], x: &[f64]| -> Vec<f64> {
            (0..bias.len())
                .map(|i| bias[i] + (0..x.len()).map(|j| w[i * x.len() + j] * x[j]).sum::<f64>())
                .collect()
        };
        let h1: Vec<f64> = dense(p.segment("net.l0.weight").unwrap(), p.segment("net.l0.bias").unwrap(), &x)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let h2: Vec<f64> = dense(p.segment("net.l1.weight").unwrap(), p.segment("net.l1.bias").unwrap(), &h1)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let y = dense(p.segment("net.l2.weight").unwrap(), p.segment("net.l2.bias").unwrap(), &h2);
        let out = mlp_apply(&p, &net, &x).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let input = 3 + (seed as usize % 3);
        let spec = mixed_spec(input, seed);
        let out_dim = spec.output();
        let mut b = LayoutBuilder::default();
        let net = Mlp::register(spec, &mut b, "net").unwrap();
        let p = random_params(b, seed, 0.7);
        let mut r = rng(seed + 7);
        let x = normal_vec(&mut r, input, 1.0);
        let g = normal_vec(&mut r, out_dim, 1.0);
        let grads = mlp_backward(&p, &net, &x, &g).unwrap();
        let dot = |y: Vec<f64>| y.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let numeric = central_diff(p.values(), |v| dot(mlp_apply(&with_values(&p, v), &net, &x).unwrap()));
        assert_all_close(&grads.params, &numeric, 1e-5, 1e-8, &format!("mlp params, seed {seed}"));
        let numeric = central_diff(&x, |xx| dot(mlp_apply(&p, &net, xx).unwrap()));
        assert_all_close(grads.input.as_ref().unwrap(), &numeric, 1e-5, 1e-8, "mlp input");
    }
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let n = 2 + seed as usize % 6;
        let mut r = rng(seed);
        let x = normal_vec(&mut r, n, 2.0);
        let gain = normal_vec(&mut r, n, 1.0);
        let bias = normal_vec(&mut r, n, 1.0);
        let up = normal_vec(&mut r, n, 1.0);
        let eps = 1e-5;
        let (gx, gg, gb) = layer_norm_backward(&x, &gain, &bias, eps, &up).unwrap();
        let f = |x: &[f64], g: &[f64], b: &[f64]| -> f64 {
            layer_norm_apply(x, g, b, eps).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        assert_all_close(&gx, &central_diff(&x, |v| f(v, &gain, &bias)), 1e-5, 1e-8, "ln input");
        assert_all_close(&gg, &central_diff(&gain, |v| f(&x, v, &bias)), 1e-5, 1e-8, "ln gain");
        assert_all_close(&gb, &central_diff(&bias, |v| f(&x, &gain, v)), 1e-5, 1e-8, "ln bias");
    }
}

#[test]
fn layer_norm_hand_values() {
    let y = layer_norm_apply(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-300).unwrap();
    assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] + 1.0).abs() < 1e-12);
    assert_eq!(layer_norm_apply(&[4.0; 3], &[1.0; 3], &[0.0; 3], 1e-5).unwrap(), vec![0.0; 3]);
    assert_eq!(
        layer_norm_apply(&[1.0, 5.0, -2.0], &[0.0; 3], &[0.1, 0.2, 0.3], 1e-5).unwrap(),
        vec![0.1, 0.2, 0.3]
    );
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let (input, hidden) = (2 + seed as usize % 3, 2 + seed as usize % 4);
        let mut b = LayoutBuilder::default();
        let cell = LstmCell::register(input, hidden, &mut b, "cell").unwrap();
        let p = random_params(b, seed, 0.6);
        let mut r = rng(seed + 3);
        let x = normal_vec(&mut r, input, 1.0);
        let state = LstmState {
            h: normal_vec(&mut r, hidden, 0.5),
            c: normal_vec(&mut r, hidden, 0.5),
        };
        let gh = normal_vec(&mut r, hidden, 1.0);
        let gc = normal_vec(&mut r, hidden, 1.0);
        let objective = |p: &ParamVector, s: &LstmState, x: &[f64]| -> f64 {
            let n = lstm_step(p, &cell, s, x).unwrap();
            n.h.iter().zip(&gh).map(|(a, b)| a * b).sum::<f64>() + n.c.iter().zip(&gc).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, trace) = cell.forward(p.values(), &state, &x).unwrap();
        let mut grads = GradientRecord::zeros(Arc::clone(p.layout()));
        let (dx, dstate) = cell.backward(p.values(), &trace, &gh, &gc, &mut grads.params).unwrap();
        let tag = format!("lstm seed {seed}");
        assert_all_close(
            &grads.params,
            &central_diff(p.values(), |v| objective(&with_values(&p, v), &state, &x)),
            1e-5,
            1e-8,
            &tag,
        );
        assert_all_close(&dx, &central_diff(&x, |v| objective(&p, &state, v)), 1e-5, 1e-8, &tag);
        let dh = central_diff(&state.h, |v| {
            objective(&p, &LstmState { h: v.to_vec(), c: state.c.clone() }, &x)
        });
        assert_all_close(&dstate.h, &dh, 1e-5, 1e-8, &tag);
        let dc = central_diff(&state.c, |v| {
            objective(&p, &LstmState { h: state.h.clone(), c: v.to_vec() }, &x)
        });
        assert_all_close(&dstate.c, &dc, 1e-5, 1e-8, &tag);
    }
}

#[test]
fn lstm_zero_parameters_give_zero_state() {
    let mut b = LayoutBuilder::default();
    let cell = LstmCell::register(3, 4, &mut b, "cell").unwrap();
    let p = ParamVector::zeros(Arc::new(b.finish()));
    let next = lstm_step(&p, &cell, &LstmState::zeros(4), &[1.0, -2.0, 0.5]).unwrap();
    assert_eq!(next, LstmState::zeros(4));
    assert!(lstm_step(&p, &cell, &LstmState::zeros(3), &[1.0, -2.0, 0.5]).is_err());
}

#[test]
fn adam_first_step_closed_form() {
    let mut b = LayoutBuilder::default();
    b.push("w", &[3]).unwrap();
    let layout = Arc::new(b.finish());
    let mut p = ParamVector::from_values(Arc::clone(&layout), vec![1.0, -2.0, 0.5]).unwrap();
    let g = GradientRecord::from_parts(Arc::clone(&layout), vec![0.3, -4.0, 0.0], None).unwrap();
    let cfg = AdamConfig::default();
    let mut m = Moments::zeros(3);
    adam_step(&mut p, &g, &mut m, 1, &cfg).unwrap();
    let expect = [1.0 - 1e-4 * 0.3 / (0.3 + 1e-8), -2.0 + 1e-4 * 4.0 / (4.0 + 1e-8), 0.5];
    for (a, b) in p.values().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
    let bad = GradientRecord::from_parts(layout, vec![0.0, f64::NAN, 0.0], None).unwrap();
    let err = adam_step(&mut p, &bad, &mut m, 2, &cfg).unwrap_err();
    assert!(err.to_string().contains('w'));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips_bit_exactly(values in proptest::collection::vec(-1e300f64..1e300, 1..40)) {
        let mut b = LayoutBuilder::default();
        b.push("a", &[values.len()]).unwrap();
        let p = ParamVector::from_values(Arc::new(b.finish()), values).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p, &serde_json::json!({"k": 1})).unwrap();
        let (back, meta) = read_params(buf.as_slice()).unwrap();
        prop_assert_eq!(meta["k"].as_i64(), Some(1));
        prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn networks_are_pure(seed in 0u64..1000) {
        let spec = mixed_spec(4, seed);
        let mut b = LayoutBuilder::default();
        let net = Mlp::register(spec, &mut b, "n").unwrap();
        let cell = LstmCell::register(4, 3, &mut b, "c").unwrap();
        let p = random_params(b, seed, 1.0);
        let x = normal_vec(&mut rng(seed), 4, 1.0);
        let a = mlp_apply(&p, &net, &x).unwrap();
        let b2 = mlp_apply(&p, &net, &x).unwrap();
        prop_assert_eq!(a, b2);
        let s = LstmState::zeros(3);
        let s1 = lstm_step(&p, &cell, &lstm_step(&p, &cell, &s, &x).unwrap(), &x).unwrap();
        let s2 = lstm_step(&p, &cell, &lstm_step(&p, &cell, &s, &x).unwrap(), &x).unwrap();
        prop_assert_eq!(s1, s2);
    }
}
