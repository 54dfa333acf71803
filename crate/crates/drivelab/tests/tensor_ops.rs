//! Operation-level checks of the network stack against independent oracles:
//! nested-loop convolution, scatter-accumulate transposed convolution, the
//! conv/conv-transpose adjoint identity, and finite-difference gradients.

use drivelab::nn::{
    finite_diff_check, mse_loss, BatchNorm2d, Conv2d, ConvTranspose2d, GradCheckOptions, Layer,
    LayerSpec, LeakyRelu, Linear, Mode, Sequential,
};
use drivelab::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    Tensor::new(shape, data).unwrap()
}

/// Direct nested-loop convolution oracle (single image, zero padding).
fn conv_oracle(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    weight: &[f64],
    (co, k, stride, pad): (usize, usize, usize, usize),
) -> Vec<f64> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for c in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let iv = input[(c * h + y as usize) * w + x as usize];
                            let wv = weight[((o * ci + c) * k + ky) * k + kx];
                            acc += iv * wv;
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Scatter-accumulate transposed-convolution oracle (single image).
fn conv_transpose_oracle(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    weight: &[f64], // [ci, co, k, k]
    (co, k, stride, pad): (usize, usize, usize, usize),
) -> Vec<f64> {
    let oh = (h - 1) * stride + k - 2 * pad;
    let ow = (w - 1) * stride + k - 2 * pad;
    let mut out = vec![0.0; co * oh * ow];
    for c in 0..ci {
        for iy in 0..h {
            for ix in 0..w {
                let iv = input[(c * h + iy) * w + ix];
                for o in 0..co {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (iy * stride + ky) as isize - pad as isize;
                            let x = (ix * stride + kx) as isize - pad as isize;
                            if y < 0 || x < 0 || y >= oh as isize || x >= ow as isize {
                                continue;
                            }
                            let wv = weight[((c * co + o) * k + ky) * k + kx];
                            out[(o * oh + y as usize) * ow + x as usize] += iv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

#[test]
fn conv_identity_kernel_passes_input_through() {
    let mut r = rng(1);
    let mut conv = Conv2d::<f64>::new(1, 1, 1, 1, 0, &mut r);
    conv.params()[0].data_mut()[0] = 1.0;
    conv.params()[1].data_mut()[0] = 0.0;
    let x = random_tensor(vec![2, 1, 5, 5], &mut r);
    let y = conv.infer(&x).unwrap();
    assert_eq!(y.shape(), x.shape());
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv_output_shape_matches_table_geometry() {
    // 3x128x128 through a 32-filter 4/2/1 conv -> 32x64x64.
    let mut r = rng(2);
    let conv = Conv2d::<f64>::new(3, 32, 4, 2, 1, &mut r);
    let x = Tensor::zeros(vec![1, 3, 128, 128]);
    let y = conv.infer(&x).unwrap();
    assert_eq!(y.shape(), &[1, 32, 64, 64]);
}

#[test]
fn conv_shape_mismatch_reports_dimensions() {
    let mut r = rng(2);
    let conv = Conv2d::<f64>::new(3, 8, 4, 2, 1, &mut r);
    let x = Tensor::zeros(vec![1, 4, 16, 16]);
    let err = conv.infer(&x).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("3") && msg.contains("4"), "{msg}");
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut r = rng(3);
    for (ci, co, h, w, k, stride, pad) in [
        (1usize, 2usize, 4usize, 4usize, 2usize, 1usize, 0usize),
        (2, 3, 5, 4, 3, 2, 1),
        (3, 2, 8, 8, 4, 2, 1),
        (2, 4, 4, 4, 4, 1, 0),
    ] {
        let mut conv = Conv2d::<f64>::new(ci, co, k, stride, pad, &mut r);
        let x = random_tensor(vec![1, ci, h, w], &mut r);
        let y = conv.forward(&x, Mode::Train).unwrap();
        let weight = conv.params()[0].data().to_vec();
        let expected = conv_oracle(x.data(), (ci, h, w), &weight, (co, k, stride, pad));
        assert_eq!(y.data().len(), expected.len());
        for (a, b) in y.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn conv_transpose_shape_matches_table_geometry() {
    // 64x1x1 through a 4/1/0 transposed conv -> 512x4x4.
    let mut r = rng(4);
    let convt = ConvTranspose2d::<f64>::new(64, 512, 4, 1, 0, &mut r);
    let x = Tensor::zeros(vec![1, 64, 1, 1]);
    let y = convt.infer(&x).unwrap();
    assert_eq!(y.shape(), &[1, 512, 4, 4]);
}

#[test]
fn conv_transpose_matches_scatter_oracle() {
    let mut r = rng(5);
    for (ci, co, h, w, k, stride, pad) in [
        (2usize, 3usize, 3usize, 3usize, 2usize, 1usize, 0usize),
        (3, 2, 2, 2, 4, 1, 0),
        (2, 2, 4, 4, 4, 2, 1),
    ] {
        let mut convt = ConvTranspose2d::<f64>::new(ci, co, k, stride, pad, &mut r);
        let x = random_tensor(vec![1, ci, h, w], &mut r);
        let y = convt.forward(&x, Mode::Train).unwrap();
        let weight = convt.params()[0].data().to_vec();
        let expected = conv_transpose_oracle(x.data(), (ci, h, w), &weight, (co, k, stride, pad));
        assert_eq!(y.data().len(), expected.len());
        for (a, b) in y.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

/// <conv(x; W), y> == <x, convT(y; W)> with the same kernel buffer and zero
/// biases, over every kernel geometry the encoder-decoder uses.
#[test]
fn conv_transpose_is_adjoint_of_conv() {
    let mut r = rng(6);
    for (ci, co, h, w, k, stride, pad) in [
        (3usize, 8usize, 16usize, 16usize, 4usize, 2usize, 1usize),
        (8, 4, 8, 8, 4, 2, 1),
        (4, 6, 4, 4, 4, 1, 0),
        (2, 2, 6, 6, 3, 1, 1),
    ] {
        let conv = Conv2d::<f64>::new(ci, co, k, stride, pad, &mut r);
        let weight = conv.params_ref()[0].clone();
        let x = random_tensor(vec![1, ci, h, w], &mut r);
        let cx = conv.infer(&x).unwrap();
        let y = random_tensor(cx.shape().to_vec(), &mut r);
        // Reinterpret the same kernel buffer as a transposed conv [co -> ci].
        let (sh, sw) = (cx.shape()[2], cx.shape()[3]);
        let convt = ConvTranspose2d::with_weights(
            co,
            ci,
            k,
            stride,
            pad,
            Tensor::new(vec![co, ci, k, k], weight.data().to_vec()).unwrap(),
            Tensor::zeros(vec![ci]),
        );
        let cty = convt.infer(&y).unwrap();
        assert_eq!(cty.shape(), &[1, ci, h, w]);
        let _ = (sh, sw);
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(cty.data()).map(|(a, b)| a * b).sum();
        let denom = lhs.abs().max(rhs.abs()).max(1e-9);
        assert!(
            ((lhs - rhs) / denom).abs() < 1e-5,
            "adjoint mismatch: {lhs} vs {rhs} (k{k} s{stride} p{pad})"
        );
    }
}

#[test]
fn batch_norm_constant_input_gives_zeros() {
    let mut bn = BatchNorm2d::<f64>::new(3);
    let x = Tensor::filled(vec![2, 3, 2, 2], 4.2);
    let y = bn.forward(&x, Mode::Train).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1e-6), "{:?}", &y.data()[..4]);
}

#[test]
fn batch_norm_identity_on_standardized_input() {
    let mut bn = BatchNorm2d::<f64>::new(1);
    // Mean 0, variance 1 across the batch for the single channel.
    let vals = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
    let x = Tensor::new(vec![2, 1, 2, 2], vals.clone()).unwrap();
    let y = bn.forward(&x, Mode::Train).unwrap();
    for (a, b) in y.data().iter().zip(&vals) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn batch_norm_rejects_batch_of_one_in_train_mode() {
    let mut bn = BatchNorm2d::<f64>::new(2);
    let x = Tensor::zeros(vec![1, 2, 2, 2]);
    assert!(bn.forward(&x, Mode::Train).is_err());
    assert!(bn.forward(&x, Mode::Eval).is_ok());
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    let specs = [LayerSpec::BatchNorm { ch: 3 }];
    let mut r = rng(7);
    let mut net = Sequential::<f64>::from_specs(&specs, &mut r);
    let x = random_tensor(vec![2, 3, 2, 2], &mut r);
    let report = finite_diff_check(&mut net, &x, &GradCheckOptions::default()).unwrap();
    assert!(report.passes(1e-3), "max rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn leaky_relu_values_and_gradient() {
    let mut lr = LeakyRelu::<f64>::new(0.2);
    let x = Tensor::new(vec![1, 1, 1, 4], vec![2.0, -1.0, 0.5, -3.0]).unwrap();
    let y = lr.forward(&x, Mode::Train).unwrap();
    assert_eq!(y.data(), &[2.0, -0.2, 0.5, -0.6]);

    // Gradient vs finite differences away from the kink.
    let specs = [LayerSpec::LeakyRelu { slope: 0.2 }];
    let mut r = rng(8);
    let mut net = Sequential::<f64>::from_specs(&specs, &mut r);
    let data: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.5 + i as f64 * 0.1 } else { -0.5 - i as f64 * 0.1 }).collect();
    let x = Tensor::new(vec![1, 1, 4, 4], data).unwrap();
    let report = finite_diff_check(&mut net, &x, &GradCheckOptions::default()).unwrap();
    assert!(report.passes(1e-6), "max rel err {}", report.max_rel_err);
}

#[test]
fn linear_layer_gradients_are_exact() {
    let specs = [LayerSpec::Linear { in_dim: 6, out_dim: 4 }];
    let mut r = rng(9);
    let mut net = Sequential::<f64>::from_specs(&specs, &mut r);
    let x = random_tensor(vec![3, 6], &mut r);
    let report = finite_diff_check(&mut net, &x, &GradCheckOptions::default()).unwrap();
    assert!(report.passes(1e-6), "max rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn conv_layers_pass_gradient_check() {
    let mut r = rng(10);
    for specs in [
        vec![LayerSpec::Conv { in_ch: 2, out_ch: 3, kernel: 4, stride: 2, pad: 1 }],
        vec![LayerSpec::ConvTranspose { in_ch: 3, out_ch: 2, kernel: 4, stride: 2, pad: 1 }],
        vec![LayerSpec::Residual { ch: 2 }],
        vec![LayerSpec::Sigmoid],
        vec![LayerSpec::SoftmaxChannels],
    ] {
        let mut net = Sequential::<f64>::from_specs(&specs, &mut r);
        let ch = match &specs[0] {
            LayerSpec::Conv { in_ch, .. } | LayerSpec::ConvTranspose { in_ch, .. } => *in_ch,
            LayerSpec::Residual { ch } => *ch,
            _ => 3,
        };
        let x = random_tensor(vec![2, ch, 8, 8], &mut r);
        let report = finite_diff_check(&mut net, &x, &GradCheckOptions::default()).unwrap();
        assert!(
            report.passes(1e-3),
            "{:?}: max rel err {} at {}",
            specs[0],
            report.max_rel_err,
            report.worst
        );
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    // MSE loss gradient via its closed form against numeric perturbation.
    let mut r = rng(11);
    let pred = random_tensor(vec![4, 3], &mut r);
    let target = random_tensor(vec![4, 3], &mut r);
    let (_, grad) = mse_loss(&pred, &target).unwrap();
    let h = 1e-6;
    for idx in 0..pred.numel() {
        let mut p = pred.clone();
        p.data_mut()[idx] += h;
        let (lp, _) = mse_loss(&p, &target).unwrap();
        p.data_mut()[idx] -= 2.0 * h;
        let (lm, _) = mse_loss(&p, &target).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - grad.data()[idx]).abs() < 1e-6);
    }
}

#[test]
fn sequential_forward_is_bit_reproducible() {
    let specs = [
        LayerSpec::conv_default(3, 8),
        LayerSpec::leaky_relu_default(),
        LayerSpec::conv_default(8, 16),
        LayerSpec::BatchNorm { ch: 16 },
        LayerSpec::leaky_relu_default(),
    ];
    let mut a = Sequential::<f32>::from_specs(&specs, &mut rng(12));
    let mut b = Sequential::<f32>::from_specs(&specs, &mut rng(12));
    let x = random_tensor(vec![2, 3, 16, 16], &mut rng(13)).cast::<f32>();
    let ya = a.forward(&x, Mode::Train).unwrap();
    let yb = b.forward(&x, Mode::Train).unwrap();
    assert_eq!(ya.data(), yb.data());
    let ia = a.infer(&x).unwrap();
    let ib = b.infer(&x).unwrap();
    assert_eq!(ia.data(), ib.data());
}
