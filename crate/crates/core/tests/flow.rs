mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DMatrix;
use nfmpc::controller::LatentGaussian;
use nfmpc::diffnet::{LayoutBuilder, ParamVector};
use nfmpc::flow::{
    coupling_forward, coupling_inverse, flow_pull, flow_push, log_likelihood, sigmoid_forward, sigmoid_inverse,
    ControlBounds, CouplingBlock, FlowConfig, FlowModel, SigmoidLayer,
};
use nfmpc::Error;
use rand::Rng;

fn jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    let mut p = x.to_vec();
    for j in 0..d {
        let h = 1e-6 * x[j].abs().max(1.0);
        p[j] = x[j] + h;
        let up = f(&p);
        p[j] = x[j] - h;
        let down = f(&p);
        p[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

#[test]
fn zero_initialized_flow_is_identity() {
    let flow = FlowModel::new(FlowConfig::new(2, 3, 4), 1).unwrap();
    let z = [0.3, -1.0, 2.0, 0.1, 5.0, -7.0];
    let c = [1.0, 2.0, 3.0, 4.0];
    let e = flow_push(&flow, &z, &c).unwrap();
    assert_eq!(e.output, z.to_vec());
    assert_eq!(e.log_det, 0.0);
    let e = flow_pull(&flow, &z, &c).unwrap();
    assert_eq!(e.output, z.to_vec());
    assert_eq!(e.log_det, 0.0);
}

#[test]
fn round_trip_and_log_det_antisymmetry() {
    for seed in 0..100u64 {
        let bounded = seed % 2 == 0;
        let flow = random_flow(seed, 2, 3, 2, bounded);
        let mut r = rng(seed);
        let c = normal_vec(&mut r, 2, 1.0);
        let z = normal_vec(&mut r, 6, 1.0);
        let up = flow_push(&flow, &z, &c).unwrap();
        let back = flow_pull(&flow, &up.output, &c).unwrap();
        let err = z.iter().zip(&back.output).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9, "seed {seed}: push/pull round trip {err}");
        assert!((up.log_det + back.log_det).abs() <= 1e-9, "seed {seed}");

        let u: Vec<f64> = if bounded {
            (0..6).map(|_| r.random_range(-1.9..2.9)).collect()
        } else {
            normal_vec(&mut r, 6, 2.0)
        };
        let down = flow_pull(&flow, &u, &c).unwrap();
        let again = flow_push(&flow, &down.output, &c).unwrap();
        let err = u.iter().zip(&again.output).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9, "seed {seed}: pull/push round trip {err}");
        assert!((down.log_det + again.log_det).abs() <= 1e-9, "seed {seed}");
    }
}

#[test]
fn composed_log_det_matches_dense_jacobian() {
    for dim in 2..=6usize {
        for seed in 0..4u64 {
            let bounded = seed % 2 == 1;
            let flow = random_flow(100 + seed + 10 * dim as u64, 1, dim, 1, bounded);
            let mut r = rng(seed);
            let c = normal_vec(&mut r, 1, 1.0);
            let z = normal_vec(&mut r, dim, 0.7);
            let jac = jacobian(|x| flow.push(x, &c).unwrap().output, &z);
            let brute = jac.determinant().abs().ln();
            let e = flow.push(&z, &c).unwrap();
            assert!(close(e.log_det, brute, 1e-5, 1e-9), "dim {dim}: {} vs {brute}", e.log_det);

            let u = e.output;
            let jac = jacobian(|x| flow.pull(x, &c).unwrap().output, &u);
            let brute = jac.determinant().abs().ln();
            let p = flow.pull(&u, &c).unwrap();
            assert!(close(p.log_det, brute, 1e-5, 1e-9), "dim {dim}: pull {} vs {brute}", p.log_det);

            // change of variables through the dense Jacobian of push
            let latent = LatentGaussian::new(normal_vec(&mut r, dim, 0.5), vec![1.3; dim], 1.0, 1.0).unwrap();
            let jac = jacobian(|x| flow.push(x, &c).unwrap().output, &p.output);
            let expect = latent.log_density(&p.output).unwrap() - jac.determinant().abs().ln();
            let ll = log_likelihood(&flow, &latent, &u, &c).unwrap();
            assert!(close(ll, expect, 1e-5, 1e-9), "dim {dim}: {ll} vs {expect}");
        }
    }
}

#[test]
fn sigmoid_flow_stays_inside_bounds() {
    let flow = random_flow(7, 2, 4, 0, true);
    let mut r = rng(11);
    let mut violations = 0;
    for _ in 0..10_000 {
        let z = normal_vec(&mut r, 8, 5.0);
        let u = flow.push(&z, &[]).unwrap().output;
        violations += u.iter().filter(|&&v| !(v > -2.0 && v < 3.0)).count();
    }
    assert_eq!(violations, 0);
}

#[test]
fn coupling_block_with_constant_scale_and_shift() {
    let mut b = LayoutBuilder::default();
    let block = CouplingBlock::with_partition(vec![0, 2], vec![1], 0, 4, 1, false, &mut b, "b").unwrap();
    let layout = Arc::new(b.finish());
    let mut params = ParamVector::zeros(layout);
    params.segment_mut("b.scale.l1.bias").unwrap()[0] = 0.7;
    params.segment_mut("b.translate.l1.bias").unwrap()[0] = -1.5;
    let y = [0.2, 2.0, -3.0];
    let e = coupling_forward(&block, params.values(), &y, &[]).unwrap();
    assert_eq!(e.output[0], 0.2);
    assert_eq!(e.output[2], -3.0);
    assert!((e.output[1] - (2.0 * 0.7f64.exp() - 1.5)).abs() < 1e-15);
    assert!((e.log_det - 0.7).abs() < 1e-15);
    let inv = coupling_inverse(&block, params.values(), &e.output, &[]).unwrap();
    assert!((inv.output[1] - 2.0).abs() < 1e-12);
    assert!((inv.log_det + 0.7).abs() < 1e-15);
}

#[test]
fn coupling_inverse_matches_bisection() {
    for seed in 0..10u64 {
        let flow = random_flow(seed + 300, 1, 6, 2, false);
        let params = flow.params().values();
        let mut r = rng(seed);
        let c = normal_vec(&mut r, 2, 1.0);
        for block in flow.blocks() {
            let target = normal_vec(&mut r, 6, 1.5);
            let inv = coupling_inverse(block, params, &target, &c).unwrap();
            let fwd = coupling_forward(block, params, &inv.output, &c).unwrap();
            assert!((fwd.log_det + inv.log_det).abs() < 1e-9);
            // solve each transformed coordinate by bisection on the forward map
            let mut y = target.clone();
            for &k in block.transformed_indices() {
                let (mut lo, mut hi) = (-1e3, 1e3);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    y[k] = mid;
                    let out = coupling_forward(block, params, &y, &c).unwrap().output[k];
                    if out < target[k] {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                y[k] = 0.5 * (lo + hi);
            }
            for (a, b) in y.iter().zip(&inv.output) {
                assert!((a - b).abs() <= 1e-7, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn context_width_is_checked() {
    let flow = random_flow(0, 1, 4, 2, false);
    assert!(matches!(flow.push(&[0.0; 4], &[1.0]), Err(Error::Dimension { .. })));
    assert!(matches!(flow.pull(&[0.0; 3], &[1.0, 2.0]), Err(Error::Dimension { .. })));
}

#[test]
fn sigmoid_values_and_derivatives() {
    let layer = SigmoidLayer::new(vec![0.0], vec![1.0]).unwrap();
    let e = sigmoid_forward(&layer, &[0.0]).unwrap();
    assert_eq!(e.output, vec![0.5]);
    assert_eq!(e.log_det, 0.25f64.ln());
    assert_eq!(sigmoid_inverse(&layer, &[0.5]).unwrap().output, vec![0.0]);
    assert!(matches!(sigmoid_inverse(&layer, &[1.0]), Err(Error::Domain(_))));
    assert!(matches!(sigmoid_inverse(&layer, &[-0.1]), Err(Error::Domain(_))));

    let mut r = rng(5);
    for _ in 0..50 {
        let lo: f64 = r.random_range(-5.0..0.0);
        let w: f64 = r.random_range(0.1..10.0);
        let layer = SigmoidLayer::new(vec![lo], vec![lo + w]).unwrap();
        let x: f64 = r.random_range(-6.0..6.0);
        let h = 1e-6;
        let fwd = |x: f64| sigmoid_forward(&layer, &[x]).unwrap().output[0];
        let d = (fwd(x + h) - fwd(x - h)) / (2.0 * h);
        let e = sigmoid_forward(&layer, &[x]).unwrap();
        assert!((e.log_det - d.ln()).abs() <= 1e-7, "forward at {x}: {} vs {}", e.log_det, d.ln());

        let u = e.output[0];
        let hu = 1e-7 * w;
        let inv = |u: f64| sigmoid_inverse(&layer, &[u]).unwrap().output[0];
        let d = (inv(u + hu) - inv(u - hu)) / (2.0 * hu);
        let i = sigmoid_inverse(&layer, &[u]).unwrap();
        assert!((i.log_det - d.ln()).abs() <= 1e-7, "inverse at {u}: {} vs {}", i.log_det, d.ln());
        assert!((i.output[0] - x).abs() <= 1e-9);
    }
}

#[test]
fn standard_normal_likelihood_at_origin() {
    let flow = FlowModel::new(FlowConfig::new(1, 2, 0), 0).unwrap();
    let ll = log_likelihood(&flow, &LatentGaussian::standard(2), &[0.0, 0.0], &[]).unwrap();
    assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
}

#[test]
fn one_dimensional_density_integrates_to_one() {
    let mut cfg = FlowConfig::new(1, 1, 0);
    cfg.blocks = 0;
    cfg.bounds = Some(ControlBounds {
        lower: vec![-2.0],
        upper: vec![3.0],
    });
    let flow = FlowModel::new(cfg, 0).unwrap();
    let latent = LatentGaussian::new(vec![0.4], vec![1.7], 1.0, 1.0).unwrap();
    let n = 200_000;
    let h = 5.0 / n as f64;
    let total: f64 = (0..n)
        .map(|k| {
            let u = -2.0 + (k as f64 + 0.5) * h;
            flow.log_likelihood(&latent, &[u], &[]).unwrap().exp() * h
        })
        .sum();
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

#[test]
fn likelihood_gradient_matches_finite_differences() {
    for seed in 0..20u64 {
        let bounded = seed % 2 == 0;
        let flow = random_flow(seed + 1000, 2, 2, 2, bounded);
        let mut r = rng(seed);
        let c = normal_vec(&mut r, 2, 1.0);
        let latent = LatentGaussian::new(normal_vec(&mut r, 4, 0.5), vec![0.8, 1.0, 1.5, 2.0], 1.0, 1.0).unwrap();
        let z = normal_vec(&mut r, 4, 1.0);
        let u = flow.push(&z, &c).unwrap().output;
        let (ll, grad, dmean) = flow.log_likelihood_grad(&latent, &u, &c).unwrap();
        assert!((ll - flow.log_likelihood(&latent, &u, &c).unwrap()).abs() < 1e-12);
        let layout = Arc::clone(flow.params().layout());
        let cfg = flow.config().clone();
        let numeric = central_diff(flow.params().values(), |p| {
            let f = FlowModel::with_params(cfg.clone(), ParamVector::from_values(layout.clone(), p.to_vec()).unwrap())
                .unwrap();
            f.log_likelihood(&latent, &u, &c).unwrap()
        });
        assert_all_close(&grad.params, &numeric, 1e-5, 1e-8, &format!("seed {seed}"));
        let numeric = central_diff(&latent.mean, |m| {
            flow.log_likelihood(&latent.with_mean(m.to_vec()), &u, &c).unwrap()
        });
        assert_all_close(&dmean, &numeric, 1e-5, 1e-8, "mean");
    }
}

#[test]
fn checkpoint_round_trip() {
    let flow = random_flow(3, 2, 3, 1, true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.bin");
    flow.save(&path).unwrap();
    let back = FlowModel::load(&path).unwrap();
    assert_eq!(back.params().values(), flow.params().values());
    assert_eq!(back.config(), flow.config());
}
