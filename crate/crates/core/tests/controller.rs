mod common;

use std::sync::Arc;

use common::{assert_all_close, central_diff, close, normal_vec, random_flow, rng};
use nalgebra::DMatrix;
use nfmpc::controller::*;
use nfmpc::diffnet::{LstmState, ParamVector};
use nfmpc::envs::{generate_env, simulate, ContextMode, EnvKind, EnvParams, EpisodeConfig, PlanarModel};
use nfmpc::flow::{ControlBounds, FlowConfig, FlowModel};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn halton_values() {
    let h = halton_sequence(1, 4, 2).unwrap();
    let col: Vec<f64> = h.iter().map(|r| r[0]).collect();
    assert_eq!(col, vec![0.5, 0.25, 0.75, 0.125]);
    assert!((h[0][1] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(first_primes(6), vec![2, 3, 5, 7, 11, 13]);
    assert!(halton_sequence(0, 1, 1).is_err());
    assert_ne!(seeded_start(0, 32), seeded_start(1, 32));
}

/// Φ via erfc and Φ⁻¹ by bisection on it.
fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn quantile_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn normal_quantile_matches_bisection() {
    assert!((standard_normal_quantile(0.8413447460685429).unwrap() - 1.0).abs() < 1e-9);
    let mut r = rng(0);
    for _ in 0..2000 {
        let p: f64 = r.random_range(1e-12..1.0);
        let a = standard_normal_quantile(p).unwrap();
        let b = quantile_by_bisection(p);
        assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "p={p}: {a} vs {b}");
    }
    assert!(standard_normal_quantile(0.0).is_err());
    assert!(standard_normal_quantile(1.0).is_err());
}

#[test]
fn halton_normals_have_standard_moments() {
    let pts = normal_points(1, 4096, 3).unwrap();
    for d in 0..3 {
        let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / 4096.0;
        let v: f64 = pts.iter().map(|p| (p[d] - m).powi(2)).sum::<f64>() / 4096.0;
        assert!(m.abs() < 0.01 && (v - 1.0).abs() < 0.02, "dim {d}: mean {m} var {v}");
    }
    let latent = LatentGaussian::new(vec![1.0, -2.0], vec![4.0, 0.25], 1.0, 1.0).unwrap();
    let h = halton_sequence(1, 3, 2).unwrap();
    let g = gaussian_from_halton(&h, &latent).unwrap();
    assert_eq!(g[0], vec![1.0, -2.0]);
    assert!((g[1][0] - (1.0 + 2.0 * standard_normal_quantile(0.5).unwrap())).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_weights_are_a_distribution(
        costs in prop::collection::vec(-1e6f64..1e6, 1..40),
        temperature in prop::sample::select(vec![1e-32, 1e-3, 0.1, 1.0, 10.0]),
    ) {
        let w = softmax_weights(&costs, temperature).unwrap();
        prop_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let heaviest = (0..costs.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        prop_assert_eq!(costs[heaviest], best);
        // invariant to positive affine maps of the costs
        let shifted: Vec<f64> = costs.iter().map(|c| 3.0 * c + 7.0).collect();
        let w2 = softmax_weights(&shifted, temperature).unwrap();
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn tiny_temperature_selects_the_minimum() {
    let w = softmax_weights(&[3.0, 1.0, 2.0, 1.0 + 1e-9], 1e-32).unwrap();
    assert_eq!(w, vec![0.0, 1.0, 0.0, 0.0]);
    assert_eq!(softmax_weights(&[2.0, 2.0], 1.0).unwrap(), vec![0.5, 0.5]);
    assert!(softmax_weights(&[1.0, f64::NAN], 1.0).is_err());
    assert!(softmax_weights(&[1.0], 0.0).is_err());
}

fn batch(controls: Vec<Vec<f64>>, weights: Vec<f64>) -> SampleBatch {
    SampleBatch {
        latents: controls.clone(),
        costs: vec![0.0; controls.len()],
        controls,
        weights,
    }
}

#[test]
fn update_hand_values() {
    let b = batch(vec![vec![1.0, 0.0], vec![3.0, 2.0]], vec![0.25, 0.75]);
    assert_eq!(weighted_control_mean(&b, 2).unwrap(), vec![2.5, 1.5]);
    let m = mppi_control_update(&[0.0, 4.0], &b, 0.5).unwrap();
    assert_eq!(m, vec![1.25, 2.75]);
    assert_eq!(mppi_latent_update(&[0.0, 4.0], &b, 1.0).unwrap(), vec![2.5, 1.5]);
    assert_eq!(mppi_latent_update(&[0.0, 4.0], &b, 0.0).unwrap(), vec![0.0, 4.0]);
    assert!(mppi_control_update(&[0.0, 0.0], &b, 1.5).is_err());

    // Σ w (u−μ)(u−μ)ᵀ around μ = (2.5, 1.5) is 0.75·I
    let prior = DMatrix::from_diagonal_element(2, 2, 2.0);
    let cov = covariance_adapt(&prior, &[2.5, 1.5], &b, 1.0).unwrap();
    let expect = DMatrix::from_row_slice(2, 2, &[0.75, 0.75, 0.75, 0.75]);
    assert!((cov.clone() - expect - DMatrix::identity(2, 2) * COVARIANCE_JITTER).abs().max() < 1e-15);
    assert_eq!(covariance_adapt(&prior, &[2.5, 1.5], &b, 0.0).unwrap(), prior);
}

#[test]
fn adapted_covariances_stay_positive_definite() {
    let mut r = rng(4);
    for _ in 0..100 {
        let n = r.random_range(1..6);
        let d = 4;
        let controls: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(&mut r, d, 3.0)).collect();
        let costs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let w = softmax_weights(&costs, r.random_range(0.01..1.0)).unwrap();
        let b = batch(controls, w);
        let mean = mppi_control_update(&vec![0.0; d], &b, 1.0).unwrap();
        let prior = DMatrix::from_diagonal_element(d, d, r.random_range(0.1..10.0));
        let cov = covariance_adapt(&prior, &mean, &b, r.random_range(0.01..1.0)).unwrap();
        assert!(min_eigenvalue(&cov) > 0.0);
        assert!((cov.clone() - cov.transpose()).abs().max() < 1e-12);
    }
}

#[test]
fn bspline_reproduces_constants_and_ramps() {
    let constant: Vec<f64> = (0..12).flat_map(|_| [1.5, -0.5]).collect();
    let s = bspline_smooth(&constant, 2, 3, 6).unwrap();
    assert_all_close(&s, &constant, 1e-12, 1e-12, "constant");
    let ramp: Vec<f64> = (0..12).map(|k| 0.3 * k as f64 - 1.0).collect();
    let s = bspline_smooth(&ramp, 1, 2, 5).unwrap();
    assert_all_close(&s, &ramp, 1e-10, 1e-12, "ramp");
    assert!(bspline_smooth(&ramp, 1, 0, 5).is_err());
    assert!(bspline_smooth(&ramp, 1, 3, 3).is_err());
    assert!(bspline_smooth(&ramp, 1, 3, 13).is_err());
}

#[test]
fn bspline_lowers_sample_variance() {
    let mut r = rng(7);
    let mut raw_var = 0.0;
    let mut smooth_var = 0.0;
    for _ in 0..200 {
        let x = normal_vec(&mut r, 32, 1.0);
        let s = bspline_smooth(&x, 1, 3, 8).unwrap();
        raw_var += x[1..31].iter().map(|v| v * v).sum::<f64>();
        smooth_var += s[1..31].iter().map(|v| v * v).sum::<f64>();
        assert_eq!(s[0], x[0]);
        assert_eq!(s[31], x[31]);
    }
    assert!(smooth_var < 0.6 * raw_var, "{smooth_var} vs {raw_var}");
}

fn perturbed_shift(kind: ShiftKind, residual: bool, seed: u64) -> ShiftModel {
    let cfg = ShiftConfig {
        kind,
        hidden: 6,
        residual,
    };
    let base = ShiftModel::new(cfg.clone(), 5, seed).unwrap();
    let mut r = rng(seed);
    let values: Vec<f64> = base.params().values().iter().map(|v| v + r.random_range(-0.4..0.4)).collect();
    ShiftModel::with_params(cfg, 5, ParamVector::from_values(base.params().layout().clone(), values).unwrap()).unwrap()
}

#[test]
fn zero_initialized_shifts() {
    let mean = vec![0.5, -1.0, 2.0, 0.0, 1.0];
    for kind in [ShiftKind::Mlp, ShiftKind::Lstm] {
        let s = ShiftModel::new(ShiftConfig::learned(kind, 8, false), 5, 0).unwrap();
        let (out, _) = s.apply(&mean, &s.initial_state()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        let s = ShiftModel::new(ShiftConfig::learned(kind, 8, true), 5, 0).unwrap();
        assert_eq!(s.apply(&mean, &s.initial_state()).unwrap().0, mean);
    }
    assert_eq!(ShiftModel::identity(5).apply(&mean, &ShiftState::default()).unwrap().0, mean);
}

#[test]
fn shift_gradients_match_differences() {
    for seed in 0..10 {
        for (kind, residual) in [(ShiftKind::Mlp, false), (ShiftKind::Mlp, true), (ShiftKind::Lstm, seed % 2 == 0)] {
            let shift = perturbed_shift(kind, residual, seed);
            let mut r = rng(seed + 50);
            let mean = normal_vec(&mut r, 5, 1.0);
            let state = match kind {
                ShiftKind::Lstm => ShiftState {
                    lstm: Some(LstmState {
                        h: normal_vec(&mut r, 6, 0.5),
                        c: normal_vec(&mut r, 6, 0.5),
                    }),
                },
                _ => ShiftState::default(),
            };
            let gout = normal_vec(&mut r, 5, 1.0);
            let (gh, gc) = (normal_vec(&mut r, 6, 1.0), normal_vec(&mut r, 6, 1.0));
            // scalar objective: gout·out + gh·h' + gc·c'
            let objective = |s: &ShiftModel, m: &[f64], st: &ShiftState| -> f64 {
                let (out, next) = s.apply(m, st).unwrap();
                let mut v: f64 = out.iter().zip(&gout).map(|(a, b)| a * b).sum();
                if let Some(l) = next.lstm {
                    v += l.h.iter().zip(&gh).map(|(a, b)| a * b).sum::<f64>();
                    v += l.c.iter().zip(&gc).map(|(a, b)| a * b).sum::<f64>();
                }
                v
            };
            let (_, _, trace) = shift.forward(&mean, &state).unwrap();
            let up_state = LstmState {
                h: gh.clone(),
                c: gc.clone(),
            };
            let mut gp = vec![0.0; shift.num_params()];
            let (gin, gstate) = shift
                .backward(&trace, &gout, state.lstm.as_ref().map(|_| &up_state), &mut gp)
                .unwrap();
            let fd_in = central_diff(&mean, |m| objective(&shift, m, &state));
            assert_all_close(&gin, &fd_in, 1e-6, 1e-8, "shift input gradient");
            let layout = shift.params().layout().clone();
            let fd_p = central_diff(shift.params().values(), |p| {
                let s = ShiftModel::with_params(
                    shift.config().clone(),
                    5,
                    ParamVector::from_values(layout.clone(), p.to_vec()).unwrap(),
                )
                .unwrap();
                objective(&s, &mean, &state)
            });
            assert_all_close(&gp, &fd_p, 1e-6, 1e-8, "shift parameter gradient");
            if let Some(l) = &state.lstm {
                let g = gstate.unwrap();
                let fd_h = central_diff(&l.h, |h| {
                    objective(&shift, &mean, &ShiftState {
                        lstm: Some(LstmState { h: h.to_vec(), c: l.c.clone() }),
                    })
                });
                let fd_c = central_diff(&l.c, |c| {
                    objective(&shift, &mean, &ShiftState {
                        lstm: Some(LstmState { h: l.h.clone(), c: c.to_vec() }),
                    })
                });
                assert_all_close(&g.h, &fd_h, 1e-6, 1e-8, "state h gradient");
                assert_all_close(&g.c, &fd_c, 1e-6, 1e-8, "state c gradient");
            }
        }
    }
}

#[test]
fn shift_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = perturbed_shift(ShiftKind::Lstm, true, 3);
    let path = dir.path().join("shift.ckpt");
    s.save(&path).unwrap();
    let l = ShiftModel::load(&path).unwrap();
    assert_eq!(l.params(), s.params());
    assert_eq!(l.config(), s.config());
}

#[test]
fn standard_shift_moves_time_forward() {
    assert_eq!(shift_standard(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2), vec![3.0, 4.0, 5.0, 6.0, 0.0, 0.0]);
}

fn identity_flow(horizon: usize, context_dim: usize) -> FlowModel {
    let mut cfg = FlowConfig::new(2, horizon, context_dim);
    cfg.blocks = 0;
    FlowModel::new(cfg, 0).unwrap()
}

#[test]
fn identity_flow_reproduces_gaussian_mppi() {
    let params = EnvParams {
        obstacles: 3,
        ..EnvParams::default()
    };
    for seed in 0..10 {
        let ctx = generate_env(EnvKind::Random, seed, &params).unwrap();
        let ep = EpisodeConfig {
            steps: 50,
            context_mode: ContextMode::None,
            stop_at_goal: false,
            seed,
            ..EpisodeConfig::default()
        };
        let var = 9.0;
        let mut m = MppiConfig::new(2, 8, 24);
        m.covariance = var;
        m.shift = MppiShift::Identity;
        m.seed = seed;
        m.step_size = 0.8;
        m.temperature = 0.05;
        let mut mppi = Mppi::new(m).unwrap();
        let mut n = NfmpcConfig::new(24);
        n.latent_var = var;
        n.seed = seed;
        n.step_size = 0.8;
        n.temperature = 0.05;
        let mut nf = Nfmpc::new(n, Arc::new(identity_flow(8, 0)), Arc::new(ShiftModel::identity(16))).unwrap();
        let a = simulate(&mut mppi, &ctx, &ep).unwrap();
        let b = simulate(&mut nf, &ctx, &ep).unwrap();
        assert_eq!(a.steps, b.steps, "seed {seed}");
        for (x, y) in a.actions.iter().zip(&b.actions) {
            assert!(close(x[0], y[0], 1e-9, 1e-9) && close(x[1], y[1], 1e-9, 1e-9), "seed {seed}: {x:?} vs {y:?}");
        }
    }
}

#[test]
fn latent_update_target_is_the_pulled_control_mean() {
    let flow = random_flow(6, 2, 4, 4, true);
    let ctx = generate_env(EnvKind::Random, 6, &EnvParams::default()).unwrap();
    let model = PlanarModel::new(ctx.clone(), Default::default(), 0.1);
    let features = ctx.features(ContextMode::StartGoal, &ctx.start);
    let mut cfg = NfmpcConfig::new(32);
    cfg.temperature = 0.2;
    let mut nf = Nfmpc::new(cfg, Arc::new(flow.clone()), Arc::new(ShiftModel::identity(8))).unwrap();
    nf.set_recording(true);
    nf.reset(&ctx.start.to_vec(), &features).unwrap();
    nf.step(&ctx.start.to_vec(), &model, &features).unwrap();
    let r = nf.take_records().pop().unwrap();
    let pulled: Vec<Vec<f64>> = r.batch.controls.iter().map(|u| flow.pull(u, &features).unwrap().output).collect();
    let via_pull = weighted_latent_mean(
        &SampleBatch {
            latents: pulled,
            ..r.batch.clone()
        },
        8,
    )
    .unwrap();
    assert_all_close(&r.mean, &via_pull, 1e-9, 1e-9, "latent mean");
    for (z, ld) in r.batch.latents.iter().zip(&r.push_log_dets) {
        assert!(close(flow.push(z, &features).unwrap().log_det, *ld, 1e-12, 1e-12));
    }
}

#[test]
fn flowmppi_batches_are_the_union_of_both_halves() {
    let ctx = generate_env(EnvKind::Random, 2, &EnvParams::default()).unwrap();
    let model = PlanarModel::new(ctx.clone(), Default::default(), 0.1);
    let state = ctx.start.to_vec();
    let flow = Arc::new(identity_flow(4, 0));
    let run = |penalty: f64| {
        let mut cfg = FlowMppiConfig::new(16);
        cfg.penalty = penalty;
        cfg.covariance = 4.0;
        cfg.latent_var = 2.0;
        let mut c = FlowMppi::new(cfg, flow.clone()).unwrap();
        c.reset(&state, &[]).unwrap();
        c.warm_start(&state, &model, &[], 1).unwrap();
        (c.last_batch().unwrap().clone(), c.mean().to_vec())
    };
    let (b0, _) = run(0.0);
    assert_eq!(b0.len(), 16);
    assert!(b0.controls[0].iter().all(|v| *v == 0.0), "the flow half starts at the latent origin");
    assert!(b0.controls[8].iter().all(|v| *v == 0.0), "the Gaussian half starts at the reset mean");
    for (u, c) in b0.controls.iter().zip(&b0.costs) {
        assert_eq!(*c, model.trajectory_cost(&state, u));
    }
    let (b1, _) = run(0.5);
    assert_eq!(b0.controls, b1.controls);
    for i in 0..16 {
        // identity flow: the anchor is the control mean itself, here zero
        let extra = if i < 8 { 0.5 * b0.controls[i].iter().map(|v| v * v).sum::<f64>() } else { 0.0 };
        assert!(close(b1.costs[i], b0.costs[i] + extra, 1e-12, 1e-12), "sample {i}");
    }
    assert!(FlowMppi::new(FlowMppiConfig::new(15), flow.clone()).is_err());
}

#[test]
fn actions_respect_the_flow_bounds() {
    let flow = Arc::new(random_flow(2, 2, 3, 0, true));
    let mut nf = Nfmpc::new(NfmpcConfig::new(4), flow, Arc::new(ShiftModel::identity(6))).unwrap();
    let mut r = rng(2);
    for k in 0..10_000 {
        let scale = [1.0, 10.0, 100.0, 1e4][k % 4];
        nf.set_mean(normal_vec(&mut r, 6, scale)).unwrap();
        let a = nf.select_action(&[], ActionMode::Deterministic).unwrap();
        assert!(a.iter().all(|v| *v > -2.0 && *v < 3.0), "{a:?}");
    }
    let mut m = MppiConfig::new(2, 3, 4);
    m.bounds = Some(ControlBounds {
        lower: vec![-1.0; 2],
        upper: vec![1.0; 2],
    });
    let mut mppi = Mppi::new(m).unwrap();
    mppi.set_mean(vec![5.0, -5.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(mppi.select_action(ActionMode::Deterministic), vec![1.0, -1.0]);
}

#[test]
fn gaussian_samples_are_clipped_to_the_bounds() {
    let bounds = ControlBounds {
        lower: vec![-1.0, -2.0],
        upper: vec![1.0, 0.5],
    };
    let inside = |u: &[f64]| {
        u.chunks(2)
            .all(|c| c[0] >= -1.0 && c[0] <= 1.0 && c[1] >= -2.0 && c[1] <= 0.5)
    };
    let mut m = MppiConfig::new(2, 5, 64);
    m.covariance = 100.0;
    m.bounds = Some(bounds.clone());
    let mut mppi = Mppi::new(m.clone()).unwrap();
    mppi.set_mean(vec![3.0; 10]).unwrap();
    let samples = mppi.samples().unwrap();
    assert!(samples.iter().all(|u| inside(u)));
    assert!(samples.iter().flatten().any(|v| *v == 1.0), "some samples saturate");
    m.bounds = None;
    let free = Mppi::new(m).unwrap().samples().unwrap();
    assert!(free.iter().any(|u| !inside(u)));

    let ctx = generate_env(EnvKind::Random, 2, &EnvParams::default()).unwrap();
    let model = PlanarModel::new(ctx.clone(), Default::default(), 0.1);
    let state = ctx.start.to_vec();
    let mut cfg = FlowMppiConfig::new(16);
    cfg.covariance = 100.0;
    cfg.bounds = Some(bounds);
    let mut c = FlowMppi::new(cfg, Arc::new(identity_flow(5, 0))).unwrap();
    c.reset(&state, &[]).unwrap();
    c.warm_start(&state, &model, &[], 1).unwrap();
    assert!(c.last_batch().unwrap().controls[8..].iter().all(|u| inside(u)));
}

#[test]
fn stochastic_actions_are_reproducible() {
    let flow = Arc::new(random_flow(3, 2, 3, 0, false));
    let draw = || {
        let mut cfg = NfmpcConfig::new(4);
        cfg.seed = 9;
        let mut nf = Nfmpc::new(cfg, flow.clone(), Arc::new(ShiftModel::identity(6))).unwrap();
        nf.reset(&[0.0; 4], &[]).unwrap();
        (0..5).map(|_| nf.select_action(&[], ActionMode::Stochastic).unwrap()).collect::<Vec<_>>()
    };
    let a = draw();
    assert_eq!(a, draw());
    assert_ne!(a[0], a[1]);
}

/// `Σ_k ‖u_k − target‖²` over the horizon.
struct Quadratic {
    target: Vec<f64>,
}

impl RolloutModel for Quadratic {
    fn control_dim(&self) -> usize {
        2
    }
    fn trajectory_cost(&self, _state: &[f64], controls: &[f64]) -> f64 {
        controls.iter().zip(self.target.iter().cycle()).map(|(u, t)| (u - t).powi(2)).sum()
    }
}

#[test]
fn warm_start_converges_on_a_quadratic() {
    let model = Quadratic {
        target: vec![1.5, -0.7],
    };
    let mut cfg = MppiConfig::new(2, 2, 1024);
    cfg.covariance_step = 0.3;
    let mut mppi = Mppi::new(cfg.clone()).unwrap();
    mppi.reset(&[], &[]).unwrap();
    mppi.warm_start(&[], &model, &[], 60).unwrap();
    for (m, t) in mppi.mean().iter().zip(model.target.iter().cycle()) {
        assert!((m - t).abs() < 1e-2, "{:?}", mppi.mean());
    }

    // a single iteration is exactly one update
    let mut a = Mppi::new(cfg.clone()).unwrap();
    a.reset(&[], &[]).unwrap();
    a.warm_start(&[], &model, &[], 1).unwrap();
    let b = a.last_batch().unwrap();
    let expect = mppi_control_update(&[0.0; 4], b, 1.0).unwrap();
    assert_eq!(a.mean(), expect.as_slice());
    assert!(a.warm_start(&[], &model, &[], 0).is_err());
}

#[test]
fn nfmpc_warm_start_matches_repeated_updates() {
    let flow = Arc::new(random_flow(5, 2, 2, 0, false));
    let model = Quadratic {
        target: vec![0.5, 0.5],
    };
    let mut cfg = NfmpcConfig::new(64);
    cfg.temperature = 0.1;
    let mut a = Nfmpc::new(cfg.clone(), flow.clone(), Arc::new(ShiftModel::identity(4))).unwrap();
    a.reset(&[], &[]).unwrap();
    a.warm_start(&[], &model, &[], 3).unwrap();
    let mut b = Nfmpc::new(cfg, flow, Arc::new(ShiftModel::identity(4))).unwrap();
    b.reset(&[], &[]).unwrap();
    for _ in 0..3 {
        b.warm_start(&[], &model, &[], 1).unwrap();
    }
    assert_eq!(a.mean(), b.mean());
    let cost = |m: &[f64]| model.trajectory_cost(&[], &a.flow().push(m, &[]).unwrap().output);
    assert!(cost(a.mean()) < cost(&[0.0; 4]));
}

#[test]
fn shifted_sample_is_the_second_sample() {
    let flow = Arc::new(random_flow(8, 2, 3, 0, true));
    let model = Quadratic { target: vec![0.3, 0.1] };
    let mut cfg = NfmpcConfig::new(8);
    cfg.shifted_sample = true;
    let mut nf = Nfmpc::new(cfg, flow.clone(), Arc::new(ShiftModel::identity(6))).unwrap();
    nf.reset(&[], &[]).unwrap();
    let s0 = nf.latent_samples(&[]).unwrap();
    assert_eq!(s0[0], s0[1]);
    nf.step(&[], &model, &[]).unwrap();
    let solved = nf.mean().to_vec();
    let s1 = nf.latent_samples(&[]).unwrap();
    let shifted = shift_standard(&flow.push(&solved, &[]).unwrap().output, 2);
    let expect = flow.pull_with_mode(&shifted, &[], nfmpc::flow::BoundsMode::Tolerant).unwrap().output;
    assert_all_close(&s1[1], &expect, 1e-12, 1e-12, "shifted sample");
}

#[test]
fn control_shift_moves_the_plan() {
    let flow = Arc::new(random_flow(4, 2, 3, 0, true));
    let model = Quadratic { target: vec![0.3, 0.1] };
    let shift = ShiftModel::new(ShiftConfig::learned(ShiftKind::Control, 4, false), 6, 0).unwrap();
    let mut nf = Nfmpc::new(NfmpcConfig::new(8), flow.clone(), Arc::new(shift)).unwrap();
    nf.reset(&[], &[]).unwrap();
    nf.set_recording(true);
    nf.step(&[], &model, &[]).unwrap();
    let solved = nf.take_records().pop().unwrap().mean;
    let u = flow.push(&solved, &[]).unwrap().output;
    let next = flow.push(nf.mean(), &[]).unwrap().output;
    assert_all_close(&next[..4], &u[2..], 1e-9, 1e-9, "shifted controls");
}
