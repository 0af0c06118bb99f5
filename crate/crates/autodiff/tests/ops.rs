use std::rc::Rc;

use cyto_autodiff::gradcheck::{self, DEFAULT_FLOOR};
use cyto_autodiff::layers::{dropout, BatchNorm, Conv2d, Linear};
use cyto_autodiff::{
    AutodiffError, Lars, Layer, LayerSpec, Mode, Optimizer, Padding, ParamStore, Session, SgdNesterov, Tape, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn conv_identity_kernel_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let conv = Conv2d::new(&mut store, "c", 1, 1, 1, 1, 0, false, &mut rng);
    store.get_mut(conv.w).value.data_mut()[0] = 1.0;
    let x = rand_tensor(&[2, 1, 7, 5], &mut rng);
    let sess = Session::new(&store, Mode::Eval, 0);
    let y = conv.forward(&sess, sess.input(x.clone())).unwrap();
    assert_eq!(*y.value(), x);
}

#[test]
fn conv_stride_four_shape_matches_base_first_layer() {
    let spec = LayerSpec::conv(5, 16, 4, Padding::Valid);
    assert_eq!(spec.output_shape(&[1, 1129, 1129]).unwrap(), vec![16, 282, 282]);
}

#[test]
fn output_shape_arithmetic_matches_closed_form() {
    for &(k, s) in &[(5usize, 4usize), (3, 1), (3, 2), (1, 1), (1, 2)] {
        for padding in [Padding::Valid, Padding::Zero] {
            for input in [8usize, 17, 64, 129, 1024, 1129] {
                let p = if padding == Padding::Zero { k / 2 } else { 0 };
                let expect = (input + 2 * p - k) / s + 1;
                let got = LayerSpec::conv(k, 8, s, padding).output_shape(&[3, input, input]).unwrap();
                assert_eq!(got, vec![8, expect, expect], "k={k} s={s} {padding:?} input={input}");
            }
        }
    }
    assert_eq!(LayerSpec::MaxPool { k: 2, s: 2 }.output_shape(&[4, 9, 9]).unwrap(), vec![4, 4, 4]);
}

#[test]
fn global_average_pool_of_constant_planes() {
    let tape = Tape::<f64>::new();
    let vals: Vec<f64> = (0..128).map(|c| c as f64 * 0.5 - 3.0).collect();
    let data: Vec<f64> = vals.iter().flat_map(|&v| std::iter::repeat_n(v, 9)).collect();
    let x = tape.constant(Tensor::new(vec![1, 128, 3, 3], data).unwrap());
    let y = x.global_avg_pool().unwrap();
    assert_eq!(y.shape(), vec![1, 128]);
    for (a, b) in y.value().data().iter().zip(&vals) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn quadratic_gradient() {
    let tape = Tape::<f64>::new();
    let w = tape.leaf(Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap(), true);
    let loss = w.mul(&w).unwrap().sum();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(w).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let tape = Tape::<f64>::new();
    let w = tape.leaf(Tensor::zeros(&[2]), true);
    assert!(matches!(tape.backward(w.relu()), Err(AutodiffError::NonScalarLoss(_))));
}

#[test]
fn shape_mismatch_names_the_dimension() {
    let tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[4, 5]));
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("inner dimension 3 vs 4"), "{err}");
    let x = tape.constant(Tensor::zeros(&[1, 3, 8, 8]));
    let w = tape.constant(Tensor::zeros(&[4, 2, 3, 3]));
    let err = x.conv2d(&w, 1, 0).unwrap_err().to_string();
    assert!(err.contains("input channels 3"), "{err}");
    let w = tape.constant(Tensor::zeros(&[4, 3, 5, 5]));
    let small = tape.constant(Tensor::zeros(&[1, 3, 4, 8]));
    let err = small.conv2d(&w, 1, 0).unwrap_err().to_string();
    assert!(err.contains("height 4"), "{err}");
}

#[test]
fn parameter_used_twice_accumulates_both_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    let lin = Linear::new(&mut store, "l", 4, 4, true, &mut rng);
    let x = rand_tensor(&[3, 4], &mut rng);
    let rep = gradcheck::check(&store, &[x], Mode::Eval, 0, 1e-6, DEFAULT_FLOOR, |s, xs| {
        let h = lin.forward(s, xs[0])?.relu();
        let h2 = lin.forward(s, h)?;
        Ok(h2.mul(&h2)?)
    })
    .unwrap();
    assert!(rep.max_rel_err < 1e-5, "{rep:?}");
    // Binding the same parameter twice in one session returns one node.
    let sess = Session::new(&store, Mode::Eval, 0);
    assert_eq!(sess.param(lin.w).id(), sess.param(lin.w).id());
}

#[test]
fn every_layer_kind_passes_finite_differences_in_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [
        LayerSpec::conv(3, 4, 1, Padding::Zero),
        LayerSpec::conv(3, 3, 2, Padding::Valid),
        LayerSpec::Conv2d { k: 5, c: 2, s: 4, padding: Padding::Zero, bias: true },
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::MaxPool { k: 2, s: 2 },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Dropout { p: 0.3 },
    ];
    for spec in specs {
        for mode in [Mode::Train, Mode::Eval] {
            let mut store = ParamStore::<f64>::new();
            let (layer, _) = Layer::build(&spec, 3, &mut store, "layer", &mut rng).unwrap();
            let x = rand_tensor(&[2, 3, 9, 9], &mut rng);
            let rep = gradcheck::check(&store, &[x], mode, 5, 1e-6, DEFAULT_FLOOR, |s, xs| layer.forward(s, xs[0])).unwrap();
            assert!(rep.max_rel_err < 1e-5, "{spec:?} {mode:?}: {rep:?}");
        }
    }
    let mut store = ParamStore::<f64>::new();
    let (fc, _) = Layer::build(&LayerSpec::FullyConnected { d: 5, bias: true }, 6, &mut store, "fc", &mut rng).unwrap();
    let x = rand_tensor(&[4, 6], &mut rng);
    let rep = gradcheck::check(&store, &[x], Mode::Train, 0, 1e-6, DEFAULT_FLOOR, |s, xs| fc.forward(s, xs[0])).unwrap();
    assert!(rep.max_rel_err < 1e-5, "{rep:?}");
}

#[test]
fn single_precision_gradients_within_tolerance() {
    // f32 analytic gradients against f64 central differences with step 1e-3.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store32 = ParamStore::<f32>::new();
    let conv = Conv2d::new(&mut store32, "c", 2, 3, 3, 1, 1, true, &mut rng);
    let x64 = rand_tensor(&[2, 2, 6, 6], &mut rng);
    let x32: Tensor<f32> = x64.cast();
    let weights: Vec<f32> = (0..2 * 3 * 36).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sess = Session::new(&store32, Mode::Train, 0);
    let xv = sess.variable(x32);
    let y = conv.forward(&sess, xv).unwrap().weighted_sum(Rc::new(weights.clone())).unwrap();
    let g = sess.backward(y).unwrap().wrt(xv);
    let store64 = store32.cast::<f64>();
    let w64: Vec<f64> = weights.iter().map(|&v| v as f64).collect();
    let eval = |x: &Tensor<f64>| {
        let s = Session::new(&store64, Mode::Train, 0);
        let v = conv.forward(&s, s.input(x.clone())).unwrap();
        v.weighted_sum(Rc::new(w64.clone())).unwrap().value().item()
    };
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for k in 0..x64.numel() {
        let mut up = x64.clone();
        up.data_mut()[k] += h;
        let mut dn = x64.clone();
        dn.data_mut()[k] -= h;
        let num = (eval(&up) - eval(&dn)) / (2.0 * h);
        worst = worst.max(gradcheck::rel_err(g.data()[k] as f64, num, DEFAULT_FLOOR));
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn batch_norm_train_output_is_standardized() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm::new(&mut store, "bn", 5);
    for &n in &[16usize, 32, 100] {
        let x = rand_tensor(&[n, 5], &mut rng);
        let x = Tensor::new(vec![n, 5], x.data().iter().map(|v| 3.0 * v + 7.0).collect()).unwrap();
        let sess = Session::new(&store, Mode::Train, 0);
        let y = bn.forward(&sess, sess.input(x)).unwrap().value();
        for c in 0..5 {
            let col: Vec<f64> = (0..n).map(|r| y.data()[r * 5 + c]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
        assert_eq!(sess.take_updates().len(), 2);
    }
}

#[test]
fn dropout_eval_identity_and_train_unbiased() {
    let store = ParamStore::<f64>::new();
    let x = Tensor::full(&[10_000], 2.0);
    let sess = Session::new(&store, Mode::Eval, 0);
    let y = dropout(&sess, sess.input(x.clone()), 0.4).unwrap();
    assert_eq!(*y.value(), x);
    let sess = Session::new(&store, Mode::Train, 9);
    let y = dropout(&sess, sess.input(x), 0.4).unwrap().value();
    let n = y.numel() as f64;
    let mean = y.data().iter().sum::<f64>() / n;
    let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn layer_spec_validation() {
    assert!(LayerSpec::Dropout { p: 1.0 }.validate().is_err());
    assert!(LayerSpec::conv(0, 4, 1, Padding::Zero).validate().is_err());
    assert!(LayerSpec::FullyConnected { d: 0, bias: true }.validate().is_err());
    assert!(LayerSpec::MaxPool { k: 2, s: 0 }.validate().is_err());
    assert!(LayerSpec::Dropout { p: 0.0 }.validate().is_ok());
}

fn store_with(values: &[f64], grads: &[f64]) -> (ParamStore<f64>, cyto_autodiff::ParamId) {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_f64(&[values.len()], values).unwrap(), true);
    store.get_mut(id).grad = Tensor::from_f64(&[grads.len()], grads).unwrap();
    (store, id)
}

#[test]
fn sgd_zero_momentum_is_plain_sgd() {
    let (mut store, id) = store_with(&[1.0, -2.0], &[0.5, 0.25]);
    let mut opt = SgdNesterov::new(0.1, 0.0);
    opt.step(&mut store);
    assert_eq!(store.value(id).data(), &[1.0 - 0.05, -2.0 - 0.025]);
}

#[test]
fn nesterov_two_steps_match_hand_simulation() {
    // b1 = 1, w1 = -0.1 * (0.9 * 1 + 1) = -0.19
    // b2 = 1.9, w2 = -0.19 - 0.1 * (0.9 * 1.9 + 1) = -0.461
    let (mut store, id) = store_with(&[0.0], &[1.0]);
    let mut opt = SgdNesterov::new(0.1, 0.9);
    opt.step(&mut store);
    assert!((store.value(id).data()[0] + 0.19).abs() < 1e-12);
    opt.step(&mut store);
    assert!((store.value(id).data()[0] + 0.461).abs() < 1e-12);
    assert!((opt.state.get(id).unwrap()[0] - 1.9).abs() < 1e-12);
}

#[test]
fn zero_gradient_is_a_fixed_point() {
    let (mut store, id) = store_with(&[0.3, 0.7], &[0.0, 0.0]);
    SgdNesterov::new(0.1, 0.9).step(&mut store);
    assert_eq!(store.value(id).data(), &[0.3, 0.7]);
    Lars::new(0.1, 0.9).step(&mut store);
    assert_eq!(store.value(id).data(), &[0.3, 0.7]);
}

#[test]
fn lars_unit_ratio_uses_base_rate() {
    let (mut store, id) = store_with(&[3.0, 4.0], &[4.0, 3.0]);
    let mut opt = Lars::new(0.5, 0.0).with_trust(1.0);
    assert_eq!(opt.trust_ratio(5.0, 5.0), 1.0);
    opt.step(&mut store);
    assert_eq!(store.value(id).data(), &[1.0, 2.5]);
    let n = 4096.0;
    assert!((0.01 * n / 128.0 - 0.32f64).abs() < 1e-15);
}

#[test]
fn lars_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (lr, mu, eta, wd) = (0.32, 0.9, 0.001, 1e-4);
        let (mut store, id) = store_with(&w, &g);
        let mut opt = Lars::new(lr, mu).with_trust(eta).with_weight_decay(wd);
        opt.step(&mut store);
        opt.step(&mut store);
        // Independent evaluation of two steps with the same (constant) gradient.
        let mut ww = w.clone();
        let mut v = vec![0.0; 7];
        for _ in 0..2 {
            let wn = ww.iter().map(|x| x * x).sum::<f64>().sqrt();
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let local = lr * eta * wn / (gn + wd * wn);
            for i in 0..7 {
                v[i] = mu * v[i] + local * (g[i] + wd * ww[i]);
                ww[i] -= v[i];
            }
        }
        for (a, b) in store.value(id).data().iter().zip(&ww) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn lars_zero_norm_falls_back_to_unit_ratio() {
    let opt = Lars::<f64>::new(0.1, 0.9);
    assert_eq!(opt.trust_ratio(0.0, 3.0), 1.0);
    assert_eq!(opt.trust_ratio(3.0, 0.0), 1.0);
}

#[test]
fn structural_ops_pass_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let store = ParamStore::<f64>::new();
    let a = rand_tensor(&[5, 4], &mut rng);
    let b = rand_tensor(&[4, 5], &mut rng);
    let seg = Rc::new(vec![0usize, 0, 1, 2, 2]);
    let idx = Rc::new(vec![4usize, 0, 0, 2, 3, 1]);
    let mask = Rc::new((0..25).map(|k| k % 6 != 0).collect::<Vec<bool>>());
    let labels = Rc::new(vec![0usize, 3, 1, 2, 3]);
    let rep = gradcheck::check(&store, &[a, b], Mode::Eval, 0, 1e-6, DEFAULT_FLOOR, |_, xs| {
        let (a, b) = (xs[0], xs[1]);
        let ab = a.matmul(&b)?; // 5x5
        let abt = a.matmul_t(&a, false, true)?; // a a^T
        let t = b.matmul_t(&a, true, true)?; // b^T a^T
        let s = ab.add(&t)?.sub(&abt.scale(0.5))?;
        let att = s.narrow_rows(5)?.leaky_relu(0.2).segment_softmax(Rc::clone(&seg))?;
        let g = att.gather_rows(Rc::clone(&idx))?.scatter_add_rows(Rc::clone(&idx), 5)?;
        let r = a.repeat_cols(2)?.sum_groups(4)?; // 5x2
        let c = Var::concat_cols(&[r, a.l2_normalize_rows()?])?;
        let m = g.masked_log_softmax_rows(Rc::clone(&mask))?;
        let ce = c.cross_entropy(Rc::clone(&labels))?;
        let e = a.scale(0.3).exp().add_scalar(1.0).ln().transpose()?;
        let tail = e.sum().add(&ce)?.add(&m.mean())?;
        Ok(m.scale_rows(Rc::new(vec![1.0, 2.0, 0.5, -1.0, 3.0]))?.sum().add(&tail)?)
    })
    .unwrap();
    assert!(rep.max_rel_err < 1e-5, "{rep:?}");
}
