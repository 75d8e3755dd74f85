//! Self-contained numerical checks of the exact properties the controllers
//! rely on. Each check rebuilds its own oracle (finite differences, dense
//! Jacobians, quadrature, closed forms) and reports its worst error.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use nfmpc::controller::{
    softmax_weights, weighted_latent_mean, LatentGaussian, Mppi, MppiConfig, MppiShift, Nfmpc, NfmpcConfig, SampleBatch,
    ShiftModel,
};
use nfmpc::diffnet::{
    layer_norm_apply, layer_norm_backward, lstm_step, mlp_apply, mlp_backward, Activation, GradientRecord, LayerSpec,
    LayoutBuilder, LstmCell, LstmState, Mlp, NetworkSpec, ParamVector,
};
use nfmpc::envs::{generate_env, simulate, ContextMode, EnvKind, EnvParams, EpisodeConfig};
use nfmpc::flow::{sigmoid_forward, sigmoid_inverse, ControlBounds, FlowConfig, FlowEval, FlowModel, SigmoidLayer};
use nfmpc::training::{approx_delta_mu_grad, LatentMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {}: {} ({}; {:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(r: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| d.sample(r)).collect()
}

/// `|a − b| / (max(|a|, |b|) + floor)`.
fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let e = (a - b).abs() / (a.abs().max(b.abs()) + floor);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

fn worst(a: &[f64], b: &[f64], floor: f64) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y, floor)).fold(0.0, f64::max)
}

fn central_diff<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
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

fn random_params(builder: LayoutBuilder, seed: u64, scale: f64) -> ParamVector {
    let layout = Arc::new(builder.finish());
    let values = normal_vec(&mut rng(seed), layout.total(), scale);
    ParamVector::from_values(layout, values).expect("matching layout")
}

/// A flow with every parameter moved away from its identity initialization.
pub fn random_flow(seed: u64, control_dim: usize, horizon: usize, context_dim: usize, bounded: bool) -> FlowModel {
    let mut cfg = FlowConfig::new(control_dim, horizon, context_dim);
    cfg.blocks = 3;
    cfg.hidden_width = 8;
    if bounded {
        cfg.bounds = Some(ControlBounds {
            lower: vec![-2.0; control_dim],
            upper: vec![3.0; control_dim],
        });
    }
    let base = FlowModel::new(cfg.clone(), seed).expect("valid flow config");
    let mut r = rng(seed ^ 0x5eed);
    let values: Vec<f64> = base.params().values().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    let params = ParamVector::from_values(Arc::clone(base.params().layout()), values).expect("matching layout");
    FlowModel::with_params(cfg, params).expect("valid flow config")
}

fn with_flow_params(flow: &FlowModel, values: &[f64]) -> FlowModel {
    let p = ParamVector::from_values(Arc::clone(flow.params().layout()), values.to_vec()).expect("matching layout");
    FlowModel::with_params(flow.config().clone(), p).expect("valid flow config")
}

fn timed(id: u32, name: &'static str, body: impl FnOnce() -> (bool, String)) -> Check {
    let t = Instant::now();
    let (passed, detail) = body();
    Check {
        id,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Dense layers, layer norm, the LSTM cell and the flow log-likelihood
/// against central differences over 20 seeds each.
pub fn gradient_suite() -> Check {
    const TOL: f64 = 1e-5;
    const FLOOR: f64 = 1e-3;
    let t = Instant::now();
    let mut check = timed(1, "gradient suite vs central differences", || {
        let mut errs = [0.0f64; 4];
        for seed in 0..20u64 {
            // dense stack with mixed activations and layer norm
            let input = 3 + seed as usize % 3;
            let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
            let mut r = rng(seed);
            let layers = (0..3)
                .map(|i| LayerSpec {
                    size: r.random_range(2..6),
                    activation: if i == 2 { Activation::Identity } else { acts[r.random_range(0..3)] },
                    layer_norm: i < 2 && r.random_bool(0.5),
                })
                .collect();
            let spec = NetworkSpec { input, layers };
            let out_dim = spec.output();
            let mut b = LayoutBuilder::default();
            let net = Mlp::register(spec, &mut b, "net").expect("valid spec");
            let p = random_params(b, seed, 0.7);
            let x = normal_vec(&mut r, input, 1.0);
            let g = normal_vec(&mut r, out_dim, 1.0);
            let dot = |y: Vec<f64>| y.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let grads = mlp_backward(&p, &net, &x, &g).expect("backward");
            let fd = central_diff(p.values(), |v| {
                let q = ParamVector::from_values(Arc::clone(p.layout()), v.to_vec()).expect("layout");
                dot(mlp_apply(&q, &net, &x).expect("forward"))
            });
            errs[0] = errs[0].max(worst(&grads.params, &fd, FLOOR));
            let fd = central_diff(&x, |xx| dot(mlp_apply(&p, &net, xx).expect("forward")));
            errs[0] = errs[0].max(worst(grads.input.as_deref().unwrap_or(&[]), &fd, FLOOR));

            // layer norm
            let n = 2 + seed as usize % 6;
            let x = normal_vec(&mut r, n, 2.0);
            let gain = normal_vec(&mut r, n, 1.0);
            let bias = normal_vec(&mut r, n, 1.0);
            let up = normal_vec(&mut r, n, 1.0);
            let f = |x: &[f64], g: &[f64], b: &[f64]| -> f64 {
                layer_norm_apply(x, g, b, 1e-5).expect("ln").iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let (gx, gg, gb) = layer_norm_backward(&x, &gain, &bias, 1e-5, &up).expect("ln backward");
            errs[1] = errs[1]
                .max(worst(&gx, &central_diff(&x, |v| f(v, &gain, &bias)), FLOOR))
                .max(worst(&gg, &central_diff(&gain, |v| f(&x, v, &bias)), FLOOR))
                .max(worst(&gb, &central_diff(&bias, |v| f(&x, &gain, v)), FLOOR));

            // LSTM cell, including the incoming state
            let (input, hidden) = (2 + seed as usize % 3, 2 + seed as usize % 4);
            let mut b = LayoutBuilder::default();
            let cell = LstmCell::register(input, hidden, &mut b, "cell").expect("cell");
            let p = random_params(b, seed, 0.6);
            let x = normal_vec(&mut r, input, 1.0);
            let state = LstmState {
                h: normal_vec(&mut r, hidden, 0.5),
                c: normal_vec(&mut r, hidden, 0.5),
            };
            let gh = normal_vec(&mut r, hidden, 1.0);
            let gc = normal_vec(&mut r, hidden, 1.0);
            let obj = |p: &ParamVector, s: &LstmState, x: &[f64]| -> f64 {
                let n = lstm_step(p, &cell, s, x).expect("lstm");
                n.h.iter().zip(&gh).map(|(a, b)| a * b).sum::<f64>() + n.c.iter().zip(&gc).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, trace) = cell.forward(p.values(), &state, &x).expect("lstm forward");
            let mut grads = GradientRecord::zeros(Arc::clone(p.layout()));
            let (dx, ds) = cell.backward(p.values(), &trace, &gh, &gc, &mut grads.params).expect("lstm backward");
            let fd_p = central_diff(p.values(), |v| {
                obj(&ParamVector::from_values(Arc::clone(p.layout()), v.to_vec()).expect("layout"), &state, &x)
            });
            let fd_h = central_diff(&state.h, |v| obj(&p, &LstmState { h: v.to_vec(), c: state.c.clone() }, &x));
            let fd_c = central_diff(&state.c, |v| obj(&p, &LstmState { h: state.h.clone(), c: v.to_vec() }, &x));
            errs[2] = errs[2]
                .max(worst(&grads.params, &fd_p, FLOOR))
                .max(worst(&dx, &central_diff(&x, |v| obj(&p, &state, v)), FLOOR))
                .max(worst(&ds.h, &fd_h, FLOOR))
                .max(worst(&ds.c, &fd_c, FLOOR));

            // flow log-likelihood in parameters and latent mean
            let flow = random_flow(seed + 1000, 2, 2, 2, seed % 2 == 0);
            let c = normal_vec(&mut r, 2, 1.0);
            let latent = LatentGaussian::new(normal_vec(&mut r, 4, 0.5), vec![0.8, 1.0, 1.5, 2.0], 1.0, 1.0)
                .expect("latent");
            let u = flow.push(&normal_vec(&mut r, 4, 1.0), &c).expect("push").output;
            let (_, grad, dmean) = flow.log_likelihood_grad(&latent, &u, &c).expect("likelihood gradient");
            let fd = central_diff(flow.params().values(), |v| {
                with_flow_params(&flow, v).log_likelihood(&latent, &u, &c).expect("likelihood")
            });
            let fd_m = central_diff(&latent.mean, |m| {
                flow.log_likelihood(&latent.with_mean(m.to_vec()), &u, &c).expect("likelihood")
            });
            errs[3] = errs[3].max(worst(&grad.params, &fd, FLOOR)).max(worst(&dmean, &fd_m, FLOOR));
        }
        let ok = errs.iter().all(|e| *e <= TOL);
        (
            ok,
            format!(
                "max rel err dense {:.1e}, layer norm {:.1e}, lstm {:.1e}, flow log-lik {:.1e}; 20 seeds",
                errs[0], errs[1], errs[2], errs[3]
            ),
        )
    });
    let secs = t.elapsed().as_secs_f64();
    if secs >= 60.0 {
        check.passed = false;
        check.detail += "; over the 60 s budget";
    }
    check
}

/// Round trips, log-det antisymmetry, dense-Jacobian log-dets for widths
/// 2–6 and sigmoid bounds over 10⁴ draws.
pub fn flow_exactness() -> Check {
    timed(2, "flow exactness", || {
        let (mut trip, mut anti) = (0.0f64, 0.0f64);
        for seed in 0..100u64 {
            let bounded = seed % 2 == 0;
            let flow = random_flow(seed, 2, 3, 2, bounded);
            let mut r = rng(seed);
            let c = normal_vec(&mut r, 2, 1.0);
            let z = normal_vec(&mut r, 6, 1.0);
            let Ok(up) = flow.push(&z, &c) else {
                return (false, format!("push failed at seed {seed}"));
            };
            let Ok(back) = flow.pull(&up.output, &c) else {
                return (false, format!("pull failed at seed {seed}"));
            };
            trip = z.iter().zip(&back.output).map(|(a, b)| (a - b).abs()).fold(trip, f64::max);
            anti = anti.max((up.log_det + back.log_det).abs());
        }
        let mut logdet = 0.0f64;
        for dim in 2..=6usize {
            for seed in 0..4u64 {
                let flow = random_flow(100 + seed + 10 * dim as u64, 1, dim, 1, seed % 2 == 1);
                let mut r = rng(seed);
                let c = normal_vec(&mut r, 1, 1.0);
                let z = normal_vec(&mut r, dim, 0.7);
                let e = flow.push(&z, &c).expect("push");
                let brute = jacobian(|x| flow.push(x, &c).expect("push").output, &z).determinant().abs().ln();
                logdet = logdet.max(rel_err(e.log_det, brute, 1e-4));
                let p = flow.pull(&e.output, &c).expect("pull");
                let brute = jacobian(|x| flow.pull(x, &c).expect("pull").output, &e.output)
                    .determinant()
                    .abs()
                    .ln();
                logdet = logdet.max(rel_err(p.log_det, brute, 1e-4));
            }
        }
        let flow = random_flow(7, 2, 4, 0, true);
        let mut r = rng(11);
        let mut violations = 0;
        for _ in 0..10_000 {
            let u = flow.push(&normal_vec(&mut r, 8, 5.0), &[]).expect("push").output;
            violations += u.iter().filter(|&&v| !(v > -2.0 && v < 3.0)).count();
        }
        let ok = trip <= 1e-9 && anti <= 1e-9 && logdet <= 1e-5 && violations == 0;
        (
            ok,
            format!(
                "round trip {trip:.1e}, antisymmetry {anti:.1e}, log-det rel err {logdet:.1e}, {violations} bound violations in 10^4 draws"
            ),
        )
    })
}

/// Identity-flow NFMPC against Gaussian MPPI on shared quasi-random points,
/// and the latent update target against explicitly pulled controls.
pub fn identity_equivalence() -> Check {
    timed(3, "identity-flow NFMPC reproduces Gaussian MPPI", || {
        let params = EnvParams {
            obstacles: 3,
            ..EnvParams::default()
        };
        let mut traj = 0.0f64;
        for seed in 0..10u64 {
            let ctx = generate_env(EnvKind::Random, seed, &params).expect("environment");
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
            let mut n = NfmpcConfig::new(24);
            n.latent_var = var;
            n.seed = seed;
            n.step_size = 0.8;
            n.temperature = 0.05;
            let mut cfg = FlowConfig::new(2, 8, 0);
            cfg.blocks = 0;
            let flow = Arc::new(FlowModel::new(cfg, 0).expect("identity flow"));
            let mut mppi = Mppi::new(m).expect("mppi");
            let mut nf = Nfmpc::new(n, flow, Arc::new(ShiftModel::identity(16))).expect("nfmpc");
            let a = simulate(&mut mppi, &ctx, &ep).expect("episode");
            let b = simulate(&mut nf, &ctx, &ep).expect("episode");
            if a.states.len() != b.states.len() {
                return (false, format!("episode lengths differ at seed {seed}"));
            }
            for (x, y) in a.states.iter().zip(&b.states) {
                for k in 0..2 {
                    traj = traj.max((x.pos[k] - y.pos[k]).abs()).max((x.vel[k] - y.vel[k]).abs());
                }
            }
        }
        let mut target = 0.0f64;
        for seed in 0..10u64 {
            let flow = random_flow(seed + 50, 2, 4, 3, seed % 2 == 0);
            let mut r = rng(seed);
            let c = normal_vec(&mut r, 3, 1.0);
            let controls: Vec<Vec<f64>> = (0..16)
                .map(|_| flow.push(&normal_vec(&mut r, 8, 1.0), &c).expect("push").output)
                .collect();
            let latents: Vec<Vec<f64>> = controls.iter().map(|u| flow.pull(u, &c).expect("pull").output).collect();
            let costs: Vec<f64> = (0..16).map(|_| r.random_range(0.0..10.0)).collect();
            let weights = softmax_weights(&costs, 0.3).expect("weights");
            let batch = SampleBatch {
                latents: latents.clone(),
                controls: controls.clone(),
                costs,
                weights: weights.clone(),
            };
            let mean = weighted_latent_mean(&batch, 8).expect("mean");
            let mut direct = vec![0.0; 8];
            for (w, u) in weights.iter().zip(&controls) {
                for (d, z) in direct.iter_mut().zip(flow.pull(u, &c).expect("pull").output) {
                    *d += w * z;
                }
            }
            target = mean.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(target, f64::max);
        }
        let ok = traj <= 1e-9 && target <= 1e-9;
        (
            ok,
            format!("max state gap {traj:.1e} over 10 seeds x 50 steps; latent target gap {target:.1e}"),
        )
    })
}

/// `pull(u) = u + λ·tanh(u)` on the real line.
struct TanhMap {
    lambda: f64,
}

impl TanhMap {
    fn push(&self, z: f64) -> f64 {
        let mut u = z / (1.0 + self.lambda.max(0.0));
        for _ in 0..100 {
            let step = (u + self.lambda * u.tanh() - z) / (1.0 + self.lambda / u.cosh().powi(2));
            u -= step;
            if step.abs() < 1e-15 * (1.0 + u.abs()) {
                break;
            }
        }
        u
    }
}

impl LatentMap for TanhMap {
    fn dim(&self) -> usize {
        1
    }
    fn context_dim(&self) -> usize {
        0
    }
    fn num_params(&self) -> usize {
        1
    }
    fn pull(&self, u: &[f64], _: &[f64]) -> nfmpc::Result<FlowEval> {
        let s = 1.0 / u[0].cosh().powi(2);
        Ok(FlowEval {
            output: vec![u[0] + self.lambda * u[0].tanh()],
            log_det: (1.0 + self.lambda * s).ln(),
        })
    }
    fn pull_vjp(&self, u: &[f64], c: &[f64], v: &[f64], kappa: f64, grad: &mut [f64]) -> nfmpc::Result<FlowEval> {
        let s = 1.0 / u[0].cosh().powi(2);
        grad[0] += v[0] * u[0].tanh() + kappa * s / (1.0 + self.lambda * s);
        self.pull(u, c)
    }
}

struct Quadrature {
    prior: f64,
    var: f64,
    target: f64,
    temperature: f64,
}

impl Quadrature {
    const NODES: usize = 2001;

    fn cost(&self, u: f64) -> f64 {
        (u - self.target).powi(2) + 0.3 * (2.0 * u).sin()
    }

    /// Trapezoid nodes over ±8 standard deviations of the latent prior.
    fn nodes(&self) -> Vec<(f64, f64)> {
        let s = self.var.sqrt();
        let h = 16.0 * s / (Self::NODES - 1) as f64;
        (0..Self::NODES)
            .map(|k| {
                let q = if k == 0 || k == Self::NODES - 1 { 0.5 * h } else { h };
                (self.prior - 8.0 * s + k as f64 * h, q)
            })
            .collect()
    }

    fn density(&self, z: f64) -> f64 {
        (-0.5 * (z - self.prior).powi(2) / self.var).exp() / (2.0 * PI * self.var).sqrt()
    }

    fn delta_mu(&self, lambda: f64) -> f64 {
        let map = TanhMap { lambda };
        let (mut num, mut den) = (0.0, 0.0);
        for (z, q) in self.nodes() {
            let a = q * self.density(z) * (-self.cost(map.push(z)) / self.temperature).exp();
            num += a * z;
            den += a;
        }
        num / den
    }

    fn batch(&self, lambda: f64) -> SampleBatch {
        let map = TanhMap { lambda };
        let nodes = self.nodes();
        let controls: Vec<Vec<f64>> = nodes.iter().map(|(z, _)| vec![map.push(*z)]).collect();
        let latents = controls.iter().map(|u| map.pull(u, &[]).expect("pull").output).collect();
        let costs: Vec<f64> = controls.iter().map(|u| self.cost(u[0])).collect();
        let raw: Vec<f64> = nodes
            .iter()
            .zip(&costs)
            .map(|((z, q), c)| q * self.density(*z) * (-c / self.temperature).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        SampleBatch {
            latents,
            controls,
            costs,
            weights: raw.iter().map(|a| a / total).collect(),
        }
    }
}

/// The approximate update gradient `M1 − M2·M3` at quadrature nodes against
/// central differences of the quadrature-evaluated update.
pub fn quadrature_oracle() -> Check {
    let mut check = timed(4, "M1 - M2*M3 vs quadrature finite differences", || {
        let mut r = rng(1);
        let mut err = 0.0f64;
        let instances = 12;
        for _ in 0..instances {
            let lambda = r.random_range(0.1..1.5);
            let quad = Quadrature {
                prior: r.random_range(-1.0..1.0),
                var: r.random_range(0.25..2.0),
                target: r.random_range(-2.0..2.0),
                temperature: r.random_range(0.5..3.0),
            };
            let h = 1e-4;
            let fd = (quad.delta_mu(lambda + h) - quad.delta_mu(lambda - h)) / (2.0 * h);
            let terms = approx_delta_mu_grad(&TanhMap { lambda }, &quad.batch(lambda), &[quad.prior], quad.var, &[])
                .expect("approximate gradient");
            err = err.max(rel_err(terms.gradient()[0][0], fd, 1e-3));
        }
        (err <= 1e-5, format!("max rel err {err:.1e} over {instances} 1-D instances"))
    });
    if check.seconds >= 30.0 {
        check.passed = false;
        check.detail += "; over the 30 s budget";
    }
    check
}

/// Sigmoid layer log-dets against differences of its own maps, and the
/// closed form at the origin of a unit-width box.
pub fn sigmoid_values() -> Check {
    timed(5, "sigmoid log-dets", || {
        let mut r = rng(5);
        let mut err = 0.0f64;
        for _ in 0..50 {
            let lo: f64 = r.random_range(-5.0..0.0);
            let w: f64 = r.random_range(0.1..10.0);
            let layer = SigmoidLayer::new(vec![lo], vec![lo + w]).expect("layer");
            let x: f64 = r.random_range(-6.0..6.0);
            let h = 1e-6;
            let fwd = |x: f64| sigmoid_forward(&layer, &[x]).expect("forward").output[0];
            let e = sigmoid_forward(&layer, &[x]).expect("forward");
            err = err.max((e.log_det - ((fwd(x + h) - fwd(x - h)) / (2.0 * h)).ln()).abs());
            let u = e.output[0];
            let hu = 1e-7 * w;
            let inv = |u: f64| sigmoid_inverse(&layer, &[u]).expect("inverse").output[0];
            let i = sigmoid_inverse(&layer, &[u]).expect("inverse");
            err = err.max((i.log_det - ((inv(u + hu) - inv(u - hu)) / (2.0 * hu)).ln()).abs());
        }
        let unit = SigmoidLayer::new(vec![0.0], vec![1.0]).expect("layer");
        let at0 = sigmoid_forward(&unit, &[0.0]).expect("forward").log_det;
        let exact = (at0 - 0.25f64.ln()).abs() <= f64::EPSILON;
        (
            err <= 1e-7 && exact,
            format!("max |log-det error| {err:.1e} at 50 points; log-det at 0 = {at0} (log 1/4 = {})", 0.25f64.ln()),
        )
    })
}

/// Normalization, shift invariance and argmin dominance of the softmax
/// weights over 1000 random cost vectors.
pub fn weight_properties() -> Check {
    timed(6, "softmax weight properties", || {
        let mut r = rng(6);
        let (mut sum_err, mut shift_err) = (0.0f64, 0.0f64);
        let mut argmin_fail = 0;
        for _ in 0..1000 {
            let n = r.random_range(2..64);
            let scale = 10f64.powf(r.random_range(-3.0..4.0));
            let costs: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0) * scale).collect();
            let beta = [1e-32, 1e-3, 0.1, 1.0, 10.0][r.random_range(0..5)];
            let w = softmax_weights(&costs, beta).expect("weights");
            sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
            let k = r.random_range(-10.0..10.0) * scale;
            let shifted: Vec<f64> = costs.iter().map(|c| c + k).collect();
            let ws = softmax_weights(&shifted, beta).expect("weights");
            shift_err = ws.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(shift_err, f64::max);
            let best = costs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if w.iter().any(|x| *x > w[best]) {
                argmin_fail += 1;
            }
        }
        let ok = sum_err <= 1e-12 && shift_err <= 1e-9 && argmin_fail == 0;
        (
            ok,
            format!("sum err {sum_err:.1e}, shift gap {shift_err:.1e}, argmin not maximal in {argmin_fail}/1000"),
        )
    })
}

pub fn all() -> Vec<Check> {
    vec![
        gradient_suite(),
        flow_exactness(),
        identity_equivalence(),
        quadrature_oracle(),
        sigmoid_values(),
        weight_properties(),
    ]
}
