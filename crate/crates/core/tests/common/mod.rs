#![allow(dead_code)]

use std::sync::Arc;

use nfmpc::diffnet::ParamVector;
use nfmpc::flow::{ControlBounds, FlowConfig, FlowModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

/// `|a − b| ≤ rel·max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

pub fn assert_all_close(analytic: &[f64], numeric: &[f64], rel: f64, abs: f64, what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(close(*a, *n, rel, abs), "{what}[{i}]: analytic {a} vs numeric {n}");
    }
}

/// Central difference with step `1e-6·max(1, |x|)`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// A flow with every parameter (including output layers) randomized.
pub fn random_flow(seed: u64, control_dim: usize, horizon: usize, context_dim: usize, bounded: bool) -> FlowModel {
    let mut cfg = FlowConfig::new(control_dim, horizon, context_dim);
    cfg.blocks = 3;
    cfg.hidden_width = 8;
    cfg.hidden_layers = 2;
    if bounded {
        cfg.bounds = Some(ControlBounds {
            lower: vec![-2.0; control_dim],
            upper: vec![3.0; control_dim],
        });
    }
    let base = FlowModel::new(cfg.clone(), seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let values: Vec<f64> = base
        .params()
        .values()
        .iter()
        .map(|v| v + r.random_range(-0.3..0.3))
        .collect();
    let params = ParamVector::from_values(Arc::clone(base.params().layout()), values).unwrap();
    FlowModel::with_params(cfg, params).unwrap()
}
