use freqshield::tensor::{Adam, AdamConfig, ElementwiseOp, Graph, Operand, PoolMode, Tensor};
use freqshield::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Direct nested-loop cross-correlation.
fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * stride + i) as isize - pad as isize;
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((b * c + ic) * h + iy as usize) * w + ix as usize]
                                    * k.data()[((oc * c + ic) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((b * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, o, ho, wo], out).unwrap()
}

/// Central-difference check of `d loss / d input` for every input.
/// `build` must return a scalar.
fn grad_check(inputs: &[Tensor<f64>], tol: f64, build: impl Fn(&mut Graph<f64>, &[freqshield::Var]) -> freqshield::Var) {
    let h = 1e-6;
    let mut g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.leaf(&t.clone().with_grad())).collect();
    let loss = build(&mut g, &vars);
    let grads = g.backward(loss).unwrap();
    let eval = |ins: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<_> = ins.iter().map(|t| g.constant(t)).collect();
        let l = build(&mut g, &vars);
        g.scalar(l).unwrap()
    };
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[idx]).expect("leaf gradient");
        let mut numeric = vec![0.0; input.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[idx].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[idx].data_mut()[i] -= h;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt()).max(1e-12);
        assert!(diff / scale <= tol, "input {idx}: relative gradient error {} > {tol}", diff / scale);
    }
}

/// Random projection so that every output component is exercised.
fn project(g: &mut Graph<f64>, v: freqshield::Var, seed: u64) -> freqshield::Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(v).to_vec();
    let r = g.constant(&Tensor::from_fn(&shape, |_| rng.gen_range(-1.0..1.0)));
    let p = g.mul(v, r).unwrap();
    g.sum(p)
}

#[test]
fn elementwise_fixtures() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(&t64(&[2], &[1.0, 2.0]));
    let b = g.constant(&t64(&[2], &[3.0, 4.0]));
    let s = g.add(a, b).unwrap();
    assert_eq!(g.value(s), &[4.0, 6.0]);

    let x = g.constant(&t64(&[3], &[-1.0, 0.0, 2.0]));
    let r = g.relu(x);
    assert_eq!(g.value(r), &[0.0, 0.0, 2.0]);

    let z = g.constant(&Tensor::scalar(0.0));
    let sg = g.sigmoid(z);
    assert_eq!(g.value(sg), &[0.5]);

    let c = g.elementwise(ElementwiseOp::Clamp { lo: 0.0, hi: 1.0 }, x, Operand::Scalar(0.0)).unwrap();
    assert_eq!(g.value(c), &[0.0, 0.0, 1.0]);
    let m = g.elementwise(ElementwiseOp::Mul, a, Operand::Scalar(3.0)).unwrap();
    assert_eq!(g.value(m), &[3.0, 6.0]);
}

#[test]
fn elementwise_shape_mismatch_is_reported() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(&Tensor::zeros(&[2, 3]));
    let b = g.constant(&Tensor::zeros(&[3, 2]));
    let err = g.add(a, b).unwrap_err();
    assert!(matches!(err, Error::Dimension(ref m) if m.contains("[2, 3]") && m.contains("[3, 2]")), "{err}");
}

#[test]
fn conv_identity_and_zero_input() {
    let mut g = Graph::<f64>::new();
    let x = t64(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
    let xv = g.constant(&x);
    let k = g.constant(&t64(&[1, 1, 1, 1], &[1.0]));
    let y = g.conv2d(xv, k, 1, 0).unwrap();
    assert_eq!(g.value(y), x.data());

    let zero = g.constant(&Tensor::zeros(&[2, 3, 5, 5]));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = g.constant(&random(&[4, 3, 3, 3], &mut rng));
    let y = g.conv2d(zero, k, 1, 1).unwrap();
    assert!(g.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn conv_ramp_matches_window_sums() {
    let x = Tensor::<f64>::from_fn(&[1, 1, 4, 4], |i| i as f64);
    let k = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
    let mut g = Graph::new();
    let (xv, kv) = (g.constant(&x), g.constant(&k));
    let y = g.conv2d(xv, kv, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 2, 2]);
    let oracle = conv_oracle(&x, &k, 1, 0);
    assert_eq!(g.value(y), oracle.data());
    // 3x3 sums of the 0..16 ramp starting at 0, 1, 4, 5.
    assert_eq!(g.value(y), &[45.0, 54.0, 81.0, 90.0]);
}

#[test]
fn conv_matches_oracle_for_strides_and_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (2, 0, 2), (1, 0, 1), (3, 2, 3)] {
        let x = random(&[2, 3, 7, 6], &mut rng);
        let w = random(&[4, 3, k, k], &mut rng);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(&x), g.constant(&w));
        let y = g.conv2d(xv, wv, stride, pad).unwrap();
        let oracle = conv_oracle(&x, &w, stride, pad);
        assert_eq!(g.shape(y), oracle.shape());
        assert!(g.tensor(y).max_abs_diff(&oracle) < 1e-12);
    }
}

#[test]
fn conv_rejects_bad_geometry() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(&Tensor::zeros(&[1, 2, 2, 2]));
    let k = g.constant(&Tensor::zeros(&[1, 2, 3, 3]));
    assert!(matches!(g.conv2d(x, k, 1, 0), Err(Error::Dimension(_))));
    let k = g.constant(&Tensor::zeros(&[1, 3, 1, 1]));
    assert!(matches!(g.conv2d(x, k, 1, 0), Err(Error::Dimension(_))));
}

#[test]
fn pool_fixtures() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(&t64(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
    let m = g.pool(x, PoolMode::MaxPool2).unwrap();
    assert_eq!(g.value(m), &[4.0]);
    let a = g.pool(x, PoolMode::GlobalAvg).unwrap();
    assert_eq!(g.value(a), &[2.5]);
    assert_eq!(g.shape(a), &[1, 1]);
    let p = g.pool(x, PoolMode::AvgPool2).unwrap();
    assert_eq!(g.value(p), &[2.5]);
    let five = g.constant(&t64(&[1, 1, 1, 1], &[5.0]));
    let u = g.pool(five, PoolMode::NearestUpsample2).unwrap();
    assert_eq!(g.value(u), &[5.0; 4]);
    assert_eq!(g.shape(u), &[1, 1, 2, 2]);

    let odd = g.constant(&Tensor::zeros(&[1, 1, 3, 2]));
    assert!(matches!(g.pool(odd, PoolMode::MaxPool2), Err(Error::Dimension(_))));
    assert!(matches!(g.pool(odd, PoolMode::AvgPool2), Err(Error::Dimension(_))));
}

#[test]
fn softmax_cross_entropy_fixtures() {
    let mut g = Graph::<f64>::new();
    let uniform = g.constant(&Tensor::zeros(&[3, 4]));
    let l = g.softmax_cross_entropy(uniform, &[0, 1, 3]).unwrap();
    assert!((g.scalar(l).unwrap() - 4f64.ln()).abs() < 1e-12);

    let sat = g.constant(&t64(&[1, 3], &[0.0, 1000.0, 0.0]));
    let l = g.softmax_cross_entropy(sat, &[1]).unwrap();
    assert!(g.scalar(l).unwrap().abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logits = random(&[2, 3], &mut rng);
    let labels = [2, 0];
    let v = g.constant(&logits);
    let l = g.softmax_cross_entropy(v, &labels).unwrap();
    // Direct formula: mean of log(sum exp) - z_label.
    let mut expect = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * 3..i * 3 + 3];
        let lse = row.iter().map(|z| z.exp()).sum::<f64>().ln();
        expect += lse - row[y];
    }
    expect /= 2.0;
    assert!((g.scalar(l).unwrap() - expect).abs() < 1e-14);

    assert!(matches!(g.softmax_cross_entropy(v, &[0, 3]), Err(Error::Index(_))));
}

#[test]
fn backward_fixtures() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t64(&[3], &[1., 2., 3.]).with_grad());
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0, 6.0]);

    let mut g = Graph::<f64>::new();
    let a = g.leaf(&t64(&[2], &[0.3, -0.2]).with_grad());
    let b = g.leaf(&t64(&[2], &[5.0, 1.0]).with_grad());
    let s = g.add(a, b).unwrap();
    let loss = g.sum(s);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(grads.get(b).unwrap(), &[1.0, 1.0]);
}

#[test]
fn backward_usage_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&t64(&[2], &[1., 2.]).with_grad());
    assert!(matches!(g.backward(x), Err(Error::Usage(_))));
    let loss = g.sum(x);
    g.backward(loss).unwrap();
    assert!(matches!(g.backward(loss), Err(Error::Usage(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::<f64>::new();
    let p = g.leaf(&t64(&[2], &[1., 2.]).with_grad());
    let c = g.leaf(&t64(&[2], &[3., 4.]));
    let m = g.mul(p, c).unwrap();
    let loss = g.sum(m);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(p).unwrap(), &[3.0, 4.0]);
    assert!(grads.get(c).is_none());
}

#[test]
fn gradcheck_elementwise_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    let kinds: Vec<(&str, Box<dyn Fn(&mut Graph<f64>, freqshield::Var, freqshield::Var) -> freqshield::Var>)> = vec![
        ("add", Box::new(|g, a, b| g.add(a, b).unwrap())),
        ("sub", Box::new(|g, a, b| g.sub(a, b).unwrap())),
        ("mul", Box::new(|g, a, b| g.mul(a, b).unwrap())),
        ("relu", Box::new(|g, a, b| { let r = g.relu(a); g.mul(r, b).unwrap() })),
        ("sigmoid", Box::new(|g, a, b| { let s = g.sigmoid(a); g.mul(s, b).unwrap() })),
        ("clamp", Box::new(|g, a, b| { let c = g.clamp(a, -0.5, 0.5).unwrap(); g.add(c, b).unwrap() })),
        ("scalars", Box::new(|g, a, b| { let s = g.mul_scalar(a, 1.7); let t = g.add_scalar(s, 0.3); let u = g.scalar_sub(2.0, t); g.mul(u, b).unwrap() })),
        ("reshape", Box::new(|g, a, b| { let r = g.reshape(a, &[4, 3]).unwrap(); let r = g.reshape(r, &[3, 4]).unwrap(); g.mul(r, b).unwrap() })),
    ];
    for (i, (name, f)) in kinds.iter().enumerate() {
        eprintln!("gradcheck {name}");
        grad_check(&[a.clone(), b.clone()], 1e-5, |g, v| {
            let y = f(g, v[0], v[1]);
            project(g, y, i as u64)
        });
    }
    grad_check(&[a.clone()], 1e-5, |g, v| g.mean(v[0]));
    grad_check(&[a.clone(), b.clone()], 1e-5, |g, v| g.mse(v[0], v[1]).unwrap());
}

#[test]
fn gradcheck_conv_bias_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for &(stride, pad, k) in &[(1, 1, 3), (2, 0, 3), (1, 0, 1)] {
        let x = random(&[2, 2, 5, 5], &mut rng);
        let w = random(&[3, 2, k, k], &mut rng);
        grad_check(&[x, w], 1e-5, |g, v| {
            let y = g.conv2d(v[0], v[1], stride, pad).unwrap();
            project(g, y, 5)
        });
    }
    let x = random(&[2, 3, 2, 2], &mut rng);
    let b = random(&[3], &mut rng);
    grad_check(&[x, b], 1e-5, |g, v| {
        let y = g.bias_add(v[0], v[1]).unwrap();
        project(g, y, 6)
    });
    let x = random(&[3, 5], &mut rng);
    let w = random(&[4, 5], &mut rng);
    grad_check(&[x, w], 1e-5, |g, v| {
        let y = g.linear(v[0], v[1]).unwrap();
        project(g, y, 7)
    });
}

#[test]
fn gradcheck_pooling_concat_and_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for mode in [PoolMode::MaxPool2, PoolMode::AvgPool2, PoolMode::NearestUpsample2, PoolMode::GlobalAvg] {
        let x = random(&[2, 2, 4, 4], &mut rng);
        grad_check(&[x], 1e-5, |g, v| {
            let y = g.pool(v[0], mode).unwrap();
            project(g, y, 8)
        });
    }
    let a = random(&[2, 2, 3, 3], &mut rng);
    let b = random(&[2, 1, 3, 3], &mut rng);
    grad_check(&[a, b], 1e-5, |g, v| {
        let y = g.concat_channels(v[0], v[1]).unwrap();
        project(g, y, 9)
    });
    let logits = random(&[4, 3], &mut rng);
    grad_check(&[logits], 1e-5, |g, v| g.softmax_cross_entropy(v[0], &[0, 2, 1, 2]).unwrap());
}

#[test]
fn gradcheck_two_layer_conv_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random(&[2, 1, 6, 6], &mut rng);
    let w1 = random(&[3, 1, 3, 3], &mut rng);
    let b1 = random(&[3], &mut rng);
    let w2 = random(&[2, 3, 3, 3], &mut rng);
    let lin = random(&[3, 2], &mut rng);
    grad_check(&[x, w1, b1, w2, lin], 1e-5, |g, v| {
        let h = g.conv2d(v[0], v[1], 1, 1).unwrap();
        let h = g.bias_add(h, v[2]).unwrap();
        let h = g.relu(h);
        let h = g.conv2d(h, v[3], 1, 1).unwrap();
        let h = g.pool(h, PoolMode::GlobalAvg).unwrap();
        let logits = g.linear(h, v[4]).unwrap();
        g.softmax_cross_entropy(logits, &[1, 0]).unwrap()
    });
}

#[test]
fn adam_first_step_is_signed_lr() {
    let mut p = Tensor::<f64>::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap().with_grad();
    p.accumulate_grad(&[3.0, -0.2, 40.0]).unwrap();
    let mut opt = Adam::new(AdamConfig::with_lr(0.01));
    opt.step(&mut [&mut p]).unwrap();
    let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
    for (a, e) in p.data().iter().zip(expect) {
        assert!((a - e).abs() < 1e-8, "{a} vs {e}");
    }
    assert!(p.grad().is_none(), "gradients are cleared");
    assert_eq!(opt.steps(), 1);
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let mut p = Tensor::<f64>::new(vec![2], vec![0.3, 0.7]).unwrap().with_grad();
    let mut opt = Adam::new(AdamConfig::with_lr(0.1));
    for _ in 0..3 {
        p.accumulate_grad(&[0.0, 0.0]).unwrap();
        opt.step(&mut [&mut p]).unwrap();
    }
    assert_eq!(p.data(), &[0.3, 0.7]);
    assert!(opt.first_moments()[0].iter().all(|&m| m == 0.0));
}

#[test]
fn adam_missing_gradient_is_usage_error() {
    let mut p = Tensor::<f64>::zeros(&[2]).with_grad();
    let mut opt = Adam::new(AdamConfig::default());
    assert!(matches!(opt.step(&mut [&mut p]), Err(Error::Usage(_))));
    assert_eq!(opt.steps(), 0);
}

#[test]
fn adam_matches_scripted_recurrence_on_square() {
    // f(w) = w^2 from w = 1, lr = 0.1.
    let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
    let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut reference = Vec::new();
    for t in 1..=3 {
        let g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        w -= lr * mhat / (vhat.sqrt() + eps);
        reference.push(w);
    }

    let mut p = Tensor::<f64>::new(vec![1], vec![1.0]).unwrap().with_grad();
    let mut opt = Adam::new(AdamConfig::with_lr(lr));
    let mut prev = 1.0;
    for expect in reference {
        let mut g = Graph::new();
        let x = g.leaf(&p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        p.accumulate_grad(grads.get(x).unwrap()).unwrap();
        opt.step(&mut [&mut p]).unwrap();
        let w = p.data()[0];
        assert!(w < prev);
        assert!((w - expect).abs() < 1e-12, "{w} vs {expect}");
        prev = w;
    }
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = Tensor::<f32>::from_fn(&[2, 3, 8, 8], |_| rng.gen());
        let w = Tensor::<f32>::from_fn(&[4, 3, 3, 3], |_| rng.gen_range(-1.0..1.0));
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(&x), g.constant(&w));
        let y = g.conv2d(xv, wv, 1, 1).unwrap();
        let y = g.pool(y, PoolMode::MaxPool2).unwrap();
        g.tensor(y)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.checksum(), b.checksum());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_commutes_and_associates(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..32)) {
        let n = v.len();
        let a = Tensor::new(vec![n], v.iter().map(|t| t.0).collect()).unwrap();
        let b = Tensor::new(vec![n], v.iter().map(|t| t.1).collect()).unwrap();
        let c = Tensor::new(vec![n], v.iter().map(|t| t.2).collect()).unwrap();
        let mut g = Graph::<f64>::new();
        let (a, b, c) = (g.constant(&a), g.constant(&b), g.constant(&c));
        let ab = g.add(a, b).unwrap();
        let ba = g.add(b, a).unwrap();
        prop_assert_eq!(g.value(ab), g.value(ba));
        let ab_c = g.add(ab, c).unwrap();
        let bc = g.add(b, c).unwrap();
        let a_bc = g.add(a, bc).unwrap();
        for (x, y) in g.value(ab_c).iter().zip(g.value(a_bc)) {
            prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn conv_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[1, 2, 6, 5], &mut rng);
        let y = random(&[1, 2, 6, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let mut g = Graph::<f64>::new();
        let (xv, yv, kv) = (g.constant(&x), g.constant(&y), g.constant(&k));
        let ax = g.mul_scalar(xv, alpha);
        let by = g.mul_scalar(yv, beta);
        let mix = g.add(ax, by).unwrap();
        let lhs = g.conv2d(mix, kv, 1, 1).unwrap();
        let cx = g.conv2d(xv, kv, 1, 1).unwrap();
        let cy = g.conv2d(yv, kv, 1, 1).unwrap();
        let acx = g.mul_scalar(cx, alpha);
        let bcy = g.mul_scalar(cy, beta);
        let rhs = g.add(acx, bcy).unwrap();
        prop_assert!(g.tensor(lhs).max_abs_diff(&g.tensor(rhs)) <= 1e-5);
    }
}
