use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{central_difference, relative_error};
use super::*;
use crate::Result;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const DRAWS: u64 = 20;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(lo..hi);
            if rng.random_bool(0.5) { mag } else { -mag }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn positive_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    random_tensor(rng, shape, 0.2, 2.0).map(f64::abs)
}

/// Reduces `out` to a scalar with fixed random weights so every output
/// element contributes a distinct gradient.
fn reduce(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone())?;
    let p = g.mul(out, w)?;
    g.sum(p)
}

type Build = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Checks every input of `build` against central differences.
fn check_op(name: &str, inputs: &[Tensor], build: &Build, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let eval = |vals: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let out = build(&mut g, &vars).unwrap();
        let weights = {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            random_tensor(&mut r, g.value(out).shape(), 0.5, 1.5)
        };
        let loss = reduce(&mut g, out, &weights).unwrap();
        let grads = g.backward(loss).unwrap();
        let gs = vars
            .iter()
            .zip(vals)
            .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        (g.value(loss).item(), gs)
    };
    let _ = &mut rng;
    let (_, analytic) = eval(inputs);
    for (which, t) in inputs.iter().enumerate() {
        let numeric = central_difference(
            |x| {
                let mut vals = inputs.to_vec();
                vals[which] = Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap();
                eval(&vals).0
            },
            t.data(),
            H,
        );
        let err = relative_error(analytic[which].data(), &numeric, 1e-8);
        assert!(err < REL_TOL, "{name} input {which}: rel err {err}");
    }
}

#[test]
fn finite_differences_for_every_op() {
    for draw in 0..DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let a = random_tensor(&mut rng, &[3, 4], 0.1, 1.5);
        let b = random_tensor(&mut rng, &[3, 4], 0.1, 1.5);
        let row = random_tensor(&mut rng, &[1, 4], 0.1, 1.5);
        let col = random_tensor(&mut rng, &[3, 1], 0.1, 1.5);
        let sc = random_tensor(&mut rng, &[], 0.1, 1.5);
        let m = random_tensor(&mut rng, &[4, 2], 0.1, 1.5);
        let pos = positive_tensor(&mut rng, &[3, 4]);
        let poscol = positive_tensor(&mut rng, &[3, 1]);
        let s = 1000 + draw;

        check_op("matmul", &[a.clone(), m.clone()], &|g, v| g.matmul(v[0], v[1]), s);
        check_op("add", &[a.clone(), b.clone()], &|g, v| g.add(v[0], v[1]), s);
        check_op("add_row", &[a.clone(), row.clone()], &|g, v| g.add(v[0], v[1]), s);
        check_op("add_col", &[a.clone(), col.clone()], &|g, v| g.add(v[0], v[1]), s);
        check_op("add_scalar_tensor", &[a.clone(), sc.clone()], &|g, v| g.add(v[0], v[1]), s);
        check_op("sub_row", &[a.clone(), row.clone()], &|g, v| g.sub(v[0], v[1]), s);
        check_op("mul", &[a.clone(), b.clone()], &|g, v| g.mul(v[0], v[1]), s);
        check_op("mul_col", &[a.clone(), col.clone()], &|g, v| g.mul(v[0], v[1]), s);
        check_op("div_col", &[a.clone(), poscol.clone()], &|g, v| g.div(v[0], v[1]), s);
        check_op("div", &[a.clone(), pos.clone()], &|g, v| g.div(v[0], v[1]), s);
        check_op("transpose", std::slice::from_ref(&m), &|g, v| g.transpose(v[0]), s);
        check_op("scale", std::slice::from_ref(&a), &|g, v| g.scale(v[0], -2.5), s);
        check_op("add_scalar", std::slice::from_ref(&a), &|g, v| g.add_scalar(v[0], 0.7), s);
        check_op("relu", std::slice::from_ref(&a), &|g, v| g.relu(v[0]), s);
        check_op("exp", std::slice::from_ref(&a), &|g, v| g.exp(v[0]), s);
        check_op("log", std::slice::from_ref(&pos), &|g, v| g.log(v[0]), s);
        check_op("square", std::slice::from_ref(&a), &|g, v| g.square(v[0]), s);
        check_op("row_l2_norm", std::slice::from_ref(&a), &|g, v| g.row_l2_norm(v[0]), s);
        check_op("softmax_rows", std::slice::from_ref(&a), &|g, v| g.softmax_rows(v[0]), s);
        check_op("log_softmax_rows", std::slice::from_ref(&a), &|g, v| g.log_softmax_rows(v[0]), s);
        check_op("sigmoid", std::slice::from_ref(&a), &|g, v| g.sigmoid(v[0]), s);
        check_op("softplus", std::slice::from_ref(&a), &|g, v| g.softplus(v[0]), s);
        check_op("mean", std::slice::from_ref(&a), &|g, v| g.mean(v[0]), s);
        check_op("sum", std::slice::from_ref(&a), &|g, v| g.sum(v[0]), s);
        check_op("sum_rows", std::slice::from_ref(&a), &|g, v| g.sum_rows(v[0]), s);
        check_op("concat_rows", &[a.clone(), row.clone()], &|g, v| g.concat_rows(&[v[0], v[1]]), s);
        // inputs are bounded away from ±0.1, so the bounds below are never hit
        check_op("clamp", std::slice::from_ref(&a), &|g, v| {
            let x = g.scale(v[0], 0.05)?;
            g.clamp(x, -0.2, 0.2)
        }, s);
        check_op("clamp_active", std::slice::from_ref(&a), &|g, v| {
            let x = g.add_scalar(v[0], 10.0)?;
            let c = g.clamp(x, -1.0, 1.0)?;
            g.add(c, v[0])
        }, s);
    }
}

#[test]
fn stop_gradient_blocks_flow() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let sg = g.stop_gradient(x).unwrap();
    let sq = g.square(sg).unwrap();
    let both = g.add(sq, x).unwrap();
    let l = g.sum(both).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    assert!(grads.get(sg).is_none());
}

#[test]
fn softmax_uniform_and_shift_invariant() {
    let t = Tensor::zeros(&[1, 3]).softmax_rows();
    for &v in t.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..DRAWS {
        let x = random_tensor(&mut rng, &[4, 6], 0.0, 5.0);
        let p = x.softmax_rows();
        let q = x.map(|v| v + 7.3).softmax_rows();
        for r in 0..4 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(&mut rng, &[3, 3], 0.0, 2.0);
    assert_eq!(Tensor::eye(3).matmul(&a).unwrap(), a);
}

#[test]
fn matmul_shape_mismatch_is_config_error() {
    let mut g = Graph::new();
    let a = g.param(Tensor::zeros(&[2, 3])).unwrap();
    let b = g.param(Tensor::zeros(&[2, 3])).unwrap();
    assert!(matches!(g.matmul(a, b), Err(crate::Error::Shape { .. })));
}

#[test]
fn non_finite_output_names_the_op() {
    let mut g = Graph::new();
    let a = g.param(Tensor::new(vec![2], vec![1.0, 0.0]).unwrap()).unwrap();
    match g.log(a) {
        Err(crate::Error::Numeric { op }) => assert_eq!(op, "log"),
        other => panic!("expected numeric error, got {other:?}"),
    }
}

#[test]
fn grad_reverse_examples() {
    for (coeff, down, up) in [
        (0.0, vec![3.0, -1.0], vec![0.0, 0.0]),
        (1.0, vec![3.0, -1.0], vec![-3.0, 1.0]),
        (0.5, vec![2.0, -4.0], vec![-1.0, 2.0]),
    ] {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![2], vec![0.4, -0.9]).unwrap()).unwrap();
        let r = g.grad_reverse(x, coeff).unwrap();
        assert_eq!(g.value(r), g.value(x));
        let w = g.constant(Tensor::new(vec![2], down).unwrap()).unwrap();
        let p = g.mul(r, w).unwrap();
        let l = g.sum(p).unwrap();
        let grads = g.backward(l).unwrap();
        let got = grads.get(x).unwrap().data().to_vec();
        assert_eq!(got.iter().map(|v| v + 0.0).collect::<Vec<_>>(), up);
    }
}

#[test]
fn grad_reverse_forward_is_bitwise_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = random_tensor(&mut rng, &[5, 7], 0.0, 1e6);
    let mut g = Graph::new();
    let x = g.param(t.clone()).unwrap();
    let r = g.grad_reverse(x, 0.37).unwrap();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(g.value(r)), bits(&t));
}

#[test]
fn backward_simple_cases() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![5], vec![1.0, -2.0, 3.0, 0.5, 0.0]).unwrap()).unwrap();
    let s = g.sum(x).unwrap();
    assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[1.0; 5]);

    let sq = g.square(x).unwrap();
    let n2 = g.sum(sq).unwrap();
    let gx = g.backward(n2).unwrap();
    assert_eq!(gx.get(x).unwrap().data(), &[2.0, -4.0, 6.0, 1.0, 0.0]);

    assert!(matches!(g.backward(x), Err(crate::Error::Usage(_))));
}

/// Random two-layer relu network against central differences.
#[test]
fn two_layer_net_gradient() {
    for draw in 0..DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + draw);
        let x = random_tensor(&mut rng, &[4, 3], 0.0, 1.0);
        let w1 = random_tensor(&mut rng, &[3, 5], 0.1, 1.0);
        let b1 = random_tensor(&mut rng, &[1, 5], 0.1, 1.0);
        let w2 = random_tensor(&mut rng, &[5, 2], 0.1, 1.0);
        let y = one_hot(&[0, 1, 1, 0], 2);
        let f = |params: &[Tensor]| -> (f64, Vec<Tensor>) {
            let mut g = Graph::new();
            let xv = g.constant(x.clone()).unwrap();
            let vs: Vec<Var> = params.iter().map(|p| g.param(p.clone()).unwrap()).collect();
            let h = g.matmul(xv, vs[0]).unwrap();
            let h = g.add(h, vs[1]).unwrap();
            let h = g.relu(h).unwrap();
            let o = g.matmul(h, vs[2]).unwrap();
            let l = softmax_cross_entropy(&mut g, o, &y, None).unwrap();
            let grads = g.backward(l).unwrap();
            let gs = vs.iter().map(|v| grads.get(*v).unwrap().clone()).collect();
            (g.value(l).item(), gs)
        };
        let params = vec![w1, b1, w2];
        let (_, analytic) = f(&params);
        for i in 0..params.len() {
            let numeric = central_difference(
                |z| {
                    let mut p = params.clone();
                    p[i] = Tensor::new(params[i].shape().to_vec(), z.to_vec()).unwrap();
                    f(&p).0
                },
                params[i].data(),
                H,
            );
            let err = relative_error(analytic[i].data(), &numeric, 1e-8);
            assert!(err < REL_TOL, "param {i}: {err}");
        }
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = random_tensor(&mut rng, &[6, 3], 0.0, 1.0);
        let mut w = Param::new("w", random_tensor(&mut rng, &[3, 2], 0.0, 1.0), LrGroup::Head);
        let y = one_hot(&[0, 1, 0, 1, 1, 0], 2);
        let mut st = OptimState::default();
        for i in 0..25 {
            let mut g = Graph::new();
            let xv = g.constant(x.clone()).unwrap();
            let wv = g.param(w.value.clone()).unwrap();
            let o = g.matmul(xv, wv).unwrap();
            let l = softmax_cross_entropy(&mut g, o, &y, None).unwrap();
            w.grad = g.backward(l).unwrap().get(wv).cloned();
            let lr = lr_at(i, &ScheduleConfig::default());
            sgd_nesterov_step(&mut [&mut w], lr, &mut st).unwrap();
        }
        w.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
