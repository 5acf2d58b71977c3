use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::{gen_partial_blobs, PartialShiftSpec};
use crate::diffcore::gradcheck::{central_difference, relative_error};
use crate::diffcore::{Graph, Param, Tensor, Var};
use crate::nets::{init_bundle, BoundBundle, BoundScalarHead, Critic, Discriminator, ModelBundle, NetDims};
use crate::selection::ScorerKind;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn micro_dims() -> NetDims {
    NetDims {
        input: 2,
        hidden: vec![5],
        bottleneck: 4,
        classes: 3,
    }
}

fn micro_batch(seed: u64, labels: bool) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::matrix(4, 2, (0..8).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap();
    let y = if labels { vec![0, 1, 2, 1] } else { Vec::new() };
    Batch { x, y }
}

fn flat(params: &[&Param]) -> Vec<f64> {
    params.iter().flat_map(|p| p.value.data().to_vec()).collect()
}

fn load(params: Vec<&mut Param>, x: &[f64]) {
    let mut off = 0;
    for p in params {
        let n = p.value.len();
        p.value.data_mut().copy_from_slice(&x[off..off + n]);
        off += n;
    }
}

fn collect(grads: &crate::diffcore::Gradients, vars: &[Var], params: &[&Param]) -> Vec<f64> {
    vars.iter()
        .zip(params)
        .flat_map(|(v, p)| match grads.get(*v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; p.value.len()],
        })
        .collect()
}

/// Value of `f` and its analytic gradient w.r.t. the bundle parameters.
fn bundle_grad(
    bundle: &ModelBundle,
    f: &dyn Fn(&mut Graph, &BoundBundle) -> Var,
) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let net = bundle.bind(&mut g).unwrap();
    let loss = f(&mut g, &net);
    let grads = g.backward(loss).unwrap();
    (g.value(loss).item(), collect(&grads, &net.vars(), &bundle.params()))
}

fn bundle_fd(bundle: &ModelBundle, f: &dyn Fn(&mut Graph, &BoundBundle) -> Var) -> Vec<f64> {
    let x0 = flat(&bundle.params());
    central_difference(
        |x| {
            let mut b = bundle.clone();
            load(b.params_mut(), x);
            bundle_grad(&b, f).0
        },
        &x0,
        H,
    )
}

fn check_bundle(name: &str, bundle: &ModelBundle, f: &dyn Fn(&mut Graph, &BoundBundle) -> Var) {
    let (_, an) = bundle_grad(bundle, f);
    let fd = bundle_fd(bundle, f);
    let err = relative_error(&an, &fd, 1e-8);
    assert!(err < TOL, "{name}: relative error {err}");
}

fn g_const(g: &mut Graph, x: &Tensor) -> Var {
    g.constant(x.clone()).unwrap()
}

fn setup() -> (ModelBundle, Batch, Batch) {
    (init_bundle(&micro_dims(), 7).unwrap(), micro_batch(1, true), micro_batch(2, false))
}

#[test]
fn source_only_examples() {
    let (bundle, src, _) = setup();
    check_bundle("source_only", &bundle, &|g, n| loss_source_only(g, n, &src).unwrap());
    // Zeroing the classifier gives uniform logits: ln K.
    let mut b = init_bundle(&NetDims::new(2, 10), 1).unwrap();
    b.classifier.weight.value = b.classifier.weight.value.map(|_| 0.0);
    b.classifier.bias.value = b.classifier.bias.value.map(|_| 0.0);
    let mut g = Graph::new();
    let net = b.bind(&mut g).unwrap();
    let l = loss_source_only(&mut g, &net, &src).unwrap();
    assert!((g.value(l).item() - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn pada_class_weight_examples() {
    let w = pada_class_weights(&Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap()).unwrap();
    assert_eq!(w.gamma, vec![1.0, 0.0, 0.0]);
    let w = pada_class_weights(&Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()).unwrap();
    assert_eq!(w.gamma, vec![1.0, 1.0]);
    let w = pada_class_weights(&Tensor::from_rows(&[vec![0.8, 0.2, 0.0], vec![0.6, 0.4, 0.0]]).unwrap()).unwrap();
    assert!((w.gamma[0] - 1.0).abs() < 1e-15 && (w.gamma[1] - 0.3 / 0.7).abs() < 1e-12 && w.gamma[2] == 0.0);
    // Duplicating the target set leaves the weights unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let p = Tensor::from_rows(&rows).unwrap().softmax_rows();
    let twice = Tensor::from_rows(&[rows.clone(), rows].concat()).unwrap().softmax_rows();
    let (a, b) = (pada_class_weights(&p).unwrap(), pada_class_weights(&twice).unwrap());
    assert!(a.gamma.iter().copied().fold(0.0, f64::max) == 1.0);
    for (x, y) in a.gamma.iter().zip(&b.gamma) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(pada_class_weights(&Tensor::zeros(&[2, 3])).is_err());
}

/// Adversarial losses: discriminator gradients match finite differences, and
/// the feature gradient equals `∇ base − coeff · (∇ full − ∇ base)` where
/// `full` includes the adversarial term and `base` does not.
fn check_adversarial(
    name: &str,
    loss: &dyn Fn(&mut Graph, &BoundBundle, &BoundScalarHead, f64, f64) -> Var,
) {
    let (bundle, _, _) = setup();
    let disc = Discriminator::init(4, 3, 5).unwrap();
    let coeff = 0.7;
    let with_disc = |b: &ModelBundle, d: &Discriminator, weight: f64, c: f64| {
        let mut g = Graph::new();
        let net = b.bind(&mut g).unwrap();
        let db = d.head.bind(&mut g).unwrap();
        let l = loss(&mut g, &net, &db, weight, c);
        (g, net, db, l)
    };
    // Discriminator parameters.
    let (g, _, db, l) = with_disc(&bundle, &disc, 1.0, coeff);
    let grads = g.backward(l).unwrap();
    let mut d2 = disc.clone();
    let dparams: Vec<&Param> = d2.head.params_mut().into_iter().map(|p| &*p).collect();
    let an = collect(&grads, &db.vars(), &dparams);
    let x0 = flat(&dparams);
    let fd = central_difference(
        |x| {
            let mut d = disc.clone();
            load(d.head.params_mut(), x);
            let (g, _, _, l) = with_disc(&bundle, &d, 1.0, coeff);
            g.value(l).item()
        },
        &x0,
        H,
    );
    let err = relative_error(&an, &fd, 1e-8);
    assert!(err < TOL, "{name} discriminator: {err}");
    // Feature path through gradient reversal.
    let (g, net, _, l) = with_disc(&bundle, &disc, 1.0, coeff);
    let grads = g.backward(l).unwrap();
    let an = collect(&grads, &net.vars(), &bundle.params());
    let fd_of = |weight: f64| {
        bundle_fd(&bundle, &|g, n| {
            let db = disc.head.bind(g).unwrap();
            loss(g, n, &db, weight, coeff)
        })
    };
    let (full, base) = (fd_of(1.0), fd_of(0.0));
    let expect: Vec<f64> = full.iter().zip(&base).map(|(f, b)| b - coeff * (f - b)).collect();
    let err = relative_error(&an, &expect, 1e-8);
    assert!(err < TOL, "{name} features: {err}");
}

#[test]
fn pada_gradients() {
    let (_, src, tgt) = setup();
    let gamma = ClassWeights {
        gamma: vec![1.0, 0.4, 0.7],
    };
    check_adversarial("pada", &|g, n, d, w, c| loss_pada(g, n, d, &src, &tgt, &gamma, 0.8 * w, c).unwrap());
}

#[test]
fn ba3us_gradients() {
    let (_, src, tgt) = setup();
    let aug = Batch {
        x: micro_batch(9, true).x.select_rows(&[0, 2, 3]),
        y: vec![2, 0, 1],
    };
    let gamma = ClassWeights {
        gamma: vec![0.5, 1.0, 0.2],
    };
    check_adversarial("ba3us", &|g, n, d, w, c| {
        loss_ba3us(g, n, d, &src, &tgt, &aug, &gamma, 0.9, 0.3, 40, 100, w, c).unwrap()
    });
}

#[test]
fn ba3us_schedule_and_complement_entropy() {
    assert_eq!(ba3us_aug_count(36, 0, 100), 36);
    assert_eq!(ba3us_aug_count(36, 50, 100), 18);
    assert_eq!(ba3us_aug_count(36, 99, 100), 1);
    assert_eq!(ba3us_aug_count(36, 100, 100), 0);
    // One-hot prediction on the true class: complement term is 0, not NaN.
    let (mut bundle, src, tgt) = setup();
    bundle.classifier.weight.value = bundle.classifier.weight.value.map(|_| 0.0);
    bundle.classifier.bias.value = Tensor::matrix(1, 3, vec![800.0, 0.0, 0.0]).unwrap();
    let disc = Discriminator::init(4, 3, 5).unwrap();
    let aug = Batch {
        x: src.x.clone(),
        y: vec![0, 0, 0, 0],
    };
    let ones = ClassWeights::ones(3);
    let mut g = Graph::new();
    let net = bundle.bind(&mut g).unwrap();
    let db = disc.head.bind(&mut g).unwrap();
    let base = loss_ba3us(&mut g, &net, &db, &src, &tgt, &aug, &ones, 0.0, 0.0, 50, 100, 0.0, 0.0).unwrap();
    let with = loss_ba3us(&mut g, &net, &db, &src, &tgt, &aug, &ones, 1.0, 0.0, 50, 100, 0.0, 0.0).unwrap();
    assert!(g.value(with).is_finite());
    assert!((g.value(with).item() - g.value(base).item()).abs() < 1e-12);
}

#[test]
fn safn_examples_and_gradients() {
    let (bundle, src, tgt) = setup();
    // The norm goal is detached, so the analytic gradient is
    // ∇CE − 2λΔr · ∇ mean‖z‖ rather than the derivative of the loss value.
    let (lambda, dr) = (0.3, 0.5);
    let (_, an) = bundle_grad(&bundle, &|g, n| loss_safn(g, n, &src, &tgt, lambda, dr).unwrap());
    let fd_ce = bundle_fd(&bundle, &|g, n| loss_source_only(g, n, &src).unwrap());
    let fd_norm = bundle_fd(&bundle, &|g, n| {
        let (xs, xt) = (g_const(g, &src.x), g_const(g, &tgt.x));
        let zs = n.features(g, xs).unwrap();
        let zt = n.features(g, xt).unwrap();
        let z = g.concat_rows(&[zs, zt]).unwrap();
        let norms = g.row_l2_norm(z).unwrap();
        g.mean(norms).unwrap()
    });
    let expect: Vec<f64> = fd_ce.iter().zip(&fd_norm).map(|(c, m)| c - 2.0 * lambda * dr * m).collect();
    let err = relative_error(&an, &expect, 1e-8);
    assert!(err < TOL, "safn: relative error {err}");
    // delta_r = 0: value and gradient equal the source-only loss.
    let (v0, g0) = bundle_grad(&bundle, &|g, n| loss_safn(g, n, &src, &tgt, 0.3, 0.0).unwrap());
    let (v1, g1) = bundle_grad(&bundle, &|g, n| loss_source_only(g, n, &src).unwrap());
    assert!((v0 - v1).abs() < 1e-12);
    assert!(relative_error(&g0, &g1, 1e-12) < 1e-12);
    // One sample with norm 2 and delta_r = 1: the norm term is 1.
    let mut g = Graph::new();
    let z = g.param(Tensor::matrix(1, 2, vec![0.0, 2.0]).unwrap()).unwrap();
    let norms = g.row_l2_norm(z).unwrap();
    let goal = g.stop_gradient(norms).unwrap();
    let goal = g.add_scalar(goal, 1.0).unwrap();
    let d = g.sub(goal, norms).unwrap();
    let sq = g.square(d).unwrap();
    assert_eq!(g.value(sq).item(), 1.0);
}

#[test]
fn ar_gradients() {
    let (bundle, src, tgt) = setup();
    let critic = Critic::init(4, 3, -5.0, 5.0, 4).unwrap();
    let w = [0.5, 1.5, 0.0, 2.0];
    check_bundle("ar main", &bundle, &|g, n| {
        let cb = critic.head.bind(g).unwrap();
        ar_main_loss(g, n, &critic, &cb, &src, &tgt, &w, 0.2, 0.8).unwrap()
    });
    let zs = bundle.features(&src.x).unwrap();
    let zt = bundle.features(&tgt.x).unwrap();
    let alpha = [0.1, 0.5, 0.9, 0.3];
    let eval = |c: &Critic| {
        let mut g = Graph::new();
        let cb = c.head.bind(&mut g).unwrap();
        let l = ar_critic_loss(&mut g, c, &cb, &zs, &zt, &w, &alpha, 10.0).unwrap();
        (g, cb, l)
    };
    let (g, cb, l) = eval(&critic);
    let grads = g.backward(l).unwrap();
    let mut c2 = critic.clone();
    let params: Vec<&Param> = c2.head.params_mut().into_iter().map(|p| &*p).collect();
    let an = collect(&grads, &cb.vars(), &params);
    let fd = central_difference(
        |x| {
            let mut c = critic.clone();
            load(c.head.params_mut(), x);
            let (g, _, l) = eval(&c);
            g.value(l).item()
        },
        &flat(&params),
        H,
    );
    let err = relative_error(&an, &fd, 1e-8);
    assert!(err < TOL, "ar critic: {err}");
}

#[test]
fn ar_gap_vanishes_on_identical_batches() {
    let (bundle, src, _) = setup();
    let critic = Critic::init(4, 3, -5.0, 5.0, 4).unwrap();
    let z = bundle.features(&src.x).unwrap();
    let mut g = Graph::new();
    let cb = critic.head.bind(&mut g).unwrap();
    let l = ar_critic_loss(&mut g, &critic, &cb, &z, &z, &[1.0; 4], &[0.5; 4], 0.0).unwrap();
    assert!(g.value(l).item().abs() < 1e-12);
}

#[test]
fn jumbot_cost_examples() {
    let mut g = Graph::new();
    let zs = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap()).unwrap();
    let zt = g.constant(Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, -1.0]]).unwrap()).unwrap();
    let lt = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap()).unwrap();
    let ys = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let c = jumbot_cost(&mut g, zs, &ys, zt, lt, 0.5, 2.0).unwrap();
    // Direct evaluation.
    let lse = |a: f64, b: f64| (a.exp() + b.exp()).ln();
    let lp = [[0.0 - lse(0.0, 1.0), 1.0 - lse(0.0, 1.0)], [2.0 - lse(2.0, 0.0), 0.0 - lse(2.0, 0.0)]];
    let d2 = [[1.0, 4.0], [2.0, 5.0]];
    for i in 0..2 {
        for j in 0..2 {
            let expect = 0.5 * d2[i][j] - 2.0 * lp[j][i];
            assert!((g.value(c).get(i, j) - expect).abs() < 1e-12, "{i},{j}");
        }
    }
    let pure = jumbot_cost(&mut g, zs, &ys, zt, lt, 1.0, 0.0).unwrap();
    assert_eq!(g.value(pure).data(), &[1.0, 4.0, 2.0, 5.0]);
    // Matching confident prediction with eta1 = 0: that column is ~0 for the matching row.
    let sharp = g.constant(Tensor::from_rows(&[vec![60.0, 0.0], vec![0.0, 60.0]]).unwrap()).unwrap();
    let c0 = jumbot_cost(&mut g, zs, &ys, zt, sharp, 0.0, 1.0).unwrap();
    assert!(g.value(c0).get(0, 0).abs() < 1e-20 && g.value(c0).get(1, 1).abs() < 1e-20);
}

#[test]
fn ot_losses_with_frozen_plan() {
    let (bundle, src, tgt) = setup();
    let ot = OtOptions::default();
    for partial in [false, true] {
        let mut g = Graph::new();
        let net = bundle.bind(&mut g).unwrap();
        let (loss, plan) = if partial {
            loss_mpot(&mut g, &net, &src, &tgt, 0.5, 0.1, 0.5, 0.4, &ot).unwrap()
        } else {
            loss_jumbot(&mut g, &net, &src, &tgt, 0.1, 0.1, 0.5, 10.0, &ot).unwrap()
        };
        if partial {
            assert!((plan.transported_mass - 0.4).abs() < 1e-6);
        }
        let grads = g.backward(loss).unwrap();
        let an = collect(&grads, &net.vars(), &bundle.params());
        let frozen = plan.pi.clone();
        let f = |g: &mut Graph, n: &BoundBundle| loss_jumbot_with_plan(g, n, &src, &tgt, 0.1, 0.5, &frozen).unwrap();
        let (_, an_frozen) = bundle_grad(&bundle, &f);
        assert_eq!(an, an_frozen, "solver must not contribute gradients");
        check_bundle("transport term", &bundle, &f);
    }
    // Perturbing the plan changes the loss value but the solver-driven loss
    // still differentiates the cost only.
    let mut g = Graph::new();
    let net = bundle.bind(&mut g).unwrap();
    let zero = loss_jumbot(&mut g, &net, &src, &tgt, 0.1, 0.0, 0.0, 10.0, &ot).unwrap().0;
    let base = loss_source_only(&mut g, &net, &src).unwrap();
    assert_eq!(g.value(zero).item(), g.value(base).item());
}

#[test]
fn zero_coefficients_reduce_to_source_only() {
    let (bundle, src, tgt) = setup();
    let disc = Discriminator::init(4, 3, 5).unwrap();
    let critic = Critic::init(4, 3, -1.0, 1.0, 5).unwrap();
    let ones = ClassWeights::ones(3);
    let ot = OtOptions::default();
    let mut g = Graph::new();
    let net = bundle.bind(&mut g).unwrap();
    let db = disc.head.bind(&mut g).unwrap();
    let cb = critic.head.bind(&mut g).unwrap();
    let base = loss_source_only(&mut g, &net, &src).unwrap();
    let aug = Batch {
        x: src.x.clone(),
        y: src.y.clone(),
    };
    let variants = [
        loss_pada(&mut g, &net, &db, &src, &tgt, &ones, 0.0, 1.0).unwrap(),
        loss_safn(&mut g, &net, &src, &tgt, 0.0, 1.0).unwrap(),
        loss_ba3us(&mut g, &net, &db, &src, &tgt, &aug, &ones, 0.0, 0.0, 3, 10, 0.0, 1.0).unwrap(),
        ar_main_loss(&mut g, &net, &critic, &cb, &src, &tgt, &[1.0; 4], 0.0, 0.0).unwrap(),
        loss_jumbot(&mut g, &net, &src, &tgt, 0.01, 0.0, 0.0, 10.0, &ot).unwrap().0,
        loss_mpot(&mut g, &net, &src, &tgt, 0.5, 0.0, 0.0, 0.3, &ot).unwrap().0,
    ];
    let b = g.value(base).item();
    for (i, v) in variants.iter().enumerate() {
        assert!((g.value(*v).item() - b).abs() < 1e-12, "variant {i}");
    }
}

#[test]
fn method_config_round_trips() {
    let cfgs = [
        MethodConfig::SourceOnly,
        MethodConfig::Pada { lambda: 0.5 },
        MethodConfig::Safn { lambda: 0.05, delta_r: 1.0 },
        MethodConfig::Ba3us { lambda_wce: 1.0, lambda_ent: 0.1 },
        MethodConfig::Ar { rho0: 5.0, a_up: 10.0, a_low: -10.0, lambda_ent: 0.1 },
        MethodConfig::Jumbot { tau: 0.01, eta1: 1e-4, eta2: 0.5, eta3: 10.0 },
        MethodConfig::Mpot { eps: 1.0, eta1: 0.01, eta2: 1.0, m: 0.3 },
    ];
    for c in cfgs {
        assert_eq!(MethodConfig::from_hp(c.tag(), &c.hp_map()).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<MethodConfig>(&json).unwrap(), c);
    }
    assert!(MethodConfig::Pada { lambda: 0.0 }.validate().is_err());
    assert!(MethodConfig::Ar { rho0: 1.0, a_up: 1.0, a_low: -2.0, lambda_ent: 0.1 }.validate().is_err());
    assert!(MethodConfig::Mpot { eps: 1.0, eta1: 0.1, eta2: 0.1, m: 1.5 }.validate().is_err());
    let hp = BTreeMap::from([("lambda".to_string(), 1.0), ("oops".to_string(), 2.0)]);
    assert!(MethodConfig::from_hp("pada", &hp).is_err());
    assert_eq!(MethodConfig::Pada { lambda: 0.5 }.hp_key(), "pada[lambda=0.5]");
}

fn small_task(seed: u64) -> TaskData {
    let spec = PartialShiftSpec {
        dim: 8,
        k_source: 4,
        k_target: 2,
        n_per_class_source: 20,
        n_per_class_target: 15,
        ..Default::default()
    };
    let (s, t) = gen_partial_blobs(&spec, seed).unwrap();
    TaskData::prepare("tiny", &s, &t, seed).unwrap()
}

fn small_cfg(iters: usize) -> TrainConfig {
    TrainConfig {
        total_iters: iters,
        eval_interval: 10,
        batch_size: 8,
        hidden: vec![16],
        bottleneck: 8,
        weight_update_interval: 10,
        ar_update_interval: 5,
        ..Default::default()
    }
}

#[test]
fn zero_iterations_gives_initial_checkpoint_only() {
    let data = small_task(1);
    let cfg = TrainConfig {
        total_iters: 0,
        eval_interval: 1,
        ..small_cfg(0)
    };
    let r = train_run(&MethodConfig::SourceOnly, &cfg, &data, &[ScorerKind::Oracle]).unwrap();
    assert_eq!(r.checkpoints.len(), 1);
    assert_eq!(r.checkpoints[0].iteration, 0);
}

#[test]
fn every_method_trains_and_replays_bitwise() {
    let data = small_task(2);
    let cfgs = [
        MethodConfig::SourceOnly,
        MethodConfig::Pada { lambda: 0.5 },
        MethodConfig::Safn { lambda: 0.05, delta_r: 1.0 },
        MethodConfig::Ba3us { lambda_wce: 1.0, lambda_ent: 0.1 },
        MethodConfig::Ar { rho0: 5.0, a_up: 10.0, a_low: -10.0, lambda_ent: 0.1 },
        MethodConfig::Jumbot { tau: 0.01, eta1: 1e-4, eta2: 0.5, eta3: 10.0 },
        MethodConfig::Mpot { eps: 1.0, eta1: 0.01, eta2: 1.0, m: 0.3 },
    ];
    let scorers = ScorerKind::ALL;
    for m in cfgs {
        let cfg = small_cfg(20);
        let a = train_run(&m, &cfg, &data, &scorers).unwrap();
        assert!(a.is_ok(), "{m}: {:?}", a.status);
        assert_eq!(a.checkpoints.len(), 3);
        assert!(a.checkpoints.iter().all(|c| c.scores.len() == 8));
        let b = train_run(&m, &cfg, &data, &scorers).unwrap();
        assert_eq!(a, b, "{m} replay");
        assert_eq!(
            serde_json::to_string(&a.checkpoints).unwrap(),
            serde_json::to_string(&b.checkpoints).unwrap()
        );
    }
}

#[test]
fn train_config_validation() {
    let cfg = TrainConfig {
        total_iters: 100,
        eval_interval: 30,
        ..Default::default()
    };
    assert!(cfg.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn source_only_improves_source_accuracy() {
    for seed in [2020, 2021, 2022] {
        let data = small_task(seed);
        let cfg = TrainConfig {
            seed,
            eval_interval: 100,
            ..small_cfg(200)
        };
        let r = train_run(&MethodConfig::SourceOnly, &cfg, &data, &[ScorerKind::SAcc]).unwrap();
        let first = r.checkpoints.first().unwrap().src_val_acc;
        let last = r.final_checkpoint().unwrap().src_val_acc;
        assert!(last >= first, "seed {seed}: {first} -> {last}");
    }
}
