//! Randomized comparisons of the optimized kernels against naive loop
//! references. The references below are written directly from the operation
//! definitions (explicit nested loops, no shared code with the kernels) so
//! the two routes are independent.

mod common;

use common::oracles::{conv2d_oracle, dense_oracle, depthwise_oracle, gap_oracle, max_pool_oracle};
use mrinet::kernels::{
    batch_norm, conv2d, dense_affine, depthwise_conv2d, global_average_pool, max_pool2d, BnMode,
    ConvSpec, Padding, BN_EPSILON, BN_MOMENTUM,
};
use mrinet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 60;
const TOL: f64 = 1e-12;

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "oracle shape disagrees with kernel shape");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-2.0..2.0))
}

#[test]
fn conv2d_matches_six_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..CASES {
        let n = rng.gen_range(1..=2);
        let h = rng.gen_range(3..=9);
        let w = rng.gen_range(3..=9);
        let cin = rng.gen_range(1..=4);
        let cout = rng.gen_range(1..=5);
        let kh = rng.gen_range(1..=3.min(h));
        let kw = rng.gen_range(1..=3.min(w));
        let stride = rng.gen_range(1..=2);
        let same = rng.gen_bool(0.5);
        let use_bias = rng.gen_bool(0.5);

        let input = random_tensor(&mut rng, &[n, h, w, cin]);
        let weights = random_tensor(&mut rng, &[kh, kw, cin, cout]);
        let bias = use_bias.then(|| random_tensor(&mut rng, &[cout]));
        let spec = ConvSpec {
            kernel_h: kh,
            kernel_w: kw,
            in_channels: cin,
            out_channels: cout,
            stride,
            padding: if same { Padding::Same } else { Padding::Valid },
            use_bias,
        };
        let got = conv2d(&input, &weights, bias.as_ref(), &spec).unwrap();
        let want = conv2d_oracle(&input, &weights, bias.as_ref(), stride, same);
        let diff = max_abs_diff(&got, &want);
        assert!(diff < TOL, "case {case}: conv2d diff {diff}");
    }
}

#[test]
fn depthwise_matches_per_channel_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..CASES {
        let n = rng.gen_range(1..=2);
        let h = rng.gen_range(3..=9);
        let w = rng.gen_range(3..=9);
        let c = rng.gen_range(1..=4);
        let kh = rng.gen_range(1..=3.min(h));
        let kw = rng.gen_range(1..=3.min(w));
        let stride = rng.gen_range(1..=2);
        let same = rng.gen_bool(0.5);
        let use_bias = rng.gen_bool(0.5);

        let input = random_tensor(&mut rng, &[n, h, w, c]);
        let weights = random_tensor(&mut rng, &[kh, kw, c, 1]);
        let bias = use_bias.then(|| random_tensor(&mut rng, &[c]));
        let padding = if same { Padding::Same } else { Padding::Valid };
        let got = depthwise_conv2d(&input, &weights, bias.as_ref(), stride, padding).unwrap();
        let want = depthwise_oracle(&input, &weights, bias.as_ref(), stride, same);
        let diff = max_abs_diff(&got, &want);
        assert!(diff < TOL, "case {case}: depthwise diff {diff}");
    }
}

#[test]
fn max_pool_matches_window_scan_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for case in 0..CASES {
        let n = rng.gen_range(1..=2);
        let h = rng.gen_range(2..=9);
        let w = rng.gen_range(2..=9);
        let c = rng.gen_range(1..=4);
        let kh = rng.gen_range(1..=3.min(h));
        let kw = rng.gen_range(1..=3.min(w));
        let stride = rng.gen_range(1..=2);
        let same = rng.gen_bool(0.5);

        let input = random_tensor(&mut rng, &[n, h, w, c]);
        let padding = if same { Padding::Same } else { Padding::Valid };
        let (got, _) = max_pool2d(&input, (kh, kw), stride, padding).unwrap();
        let want = max_pool_oracle(&input, (kh, kw), stride, same);
        assert_eq!(got.data(), want.data(), "case {case}: max pool mismatch");
    }
}

#[test]
fn gap_matches_double_loop_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for case in 0..CASES {
        let shape = [
            rng.gen_range(1..=3),
            rng.gen_range(1..=7),
            rng.gen_range(1..=7),
            rng.gen_range(1..=4),
        ];
        let input = random_tensor(&mut rng, &shape);
        let got = global_average_pool(&input).unwrap();
        let want = gap_oracle(&input);
        let diff = max_abs_diff(&got, &want);
        assert!(diff < TOL, "case {case}: gap diff {diff}");
    }
}

#[test]
fn gap_spec_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let input = random_tensor(&mut rng, &[2, 5, 5, 3]);
    let got = global_average_pool(&input).unwrap();
    let want = gap_oracle(&input);
    assert!(max_abs_diff(&got, &want) < TOL);
}

#[test]
fn dense_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for case in 0..CASES {
        let n = rng.gen_range(1..=5);
        let d = rng.gen_range(1..=16);
        let u = rng.gen_range(1..=8);
        let input = random_tensor(&mut rng, &[n, d]);
        let weights = random_tensor(&mut rng, &[d, u]);
        let bias = random_tensor(&mut rng, &[u]);
        let got = dense_affine(&input, &weights, &bias).unwrap();
        let want = dense_oracle(&input, &weights, &bias);
        let diff = max_abs_diff(&got, &want);
        assert!(diff < TOL, "case {case}: dense diff {diff}");
    }
}

#[test]
fn dense_random_16x8_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let input = random_tensor(&mut rng, &[4, 16]);
    let weights = random_tensor(&mut rng, &[16, 8]);
    let bias = random_tensor(&mut rng, &[8]);
    let got = dense_affine(&input, &weights, &bias).unwrap();
    let want = dense_oracle(&input, &weights, &bias);
    assert!(max_abs_diff(&got, &want) < TOL);
}

#[test]
fn batch_norm_infer_matches_scalar_formula_on_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for _ in 0..CASES {
        let c = rng.gen_range(1..=4);
        let shape = [rng.gen_range(1..=2), rng.gen_range(1..=5), rng.gen_range(1..=5), c];
        let input = random_tensor(&mut rng, &shape);
        let gamma = random_tensor(&mut rng, &[c]);
        let beta = random_tensor(&mut rng, &[c]);
        let rm = random_tensor(&mut rng, &[c]);
        let rv = Tensor::from_fn(&[c], |_| rng.gen_range(0.1..2.0));
        let out = batch_norm(&input, &gamma, &beta, &rm, &rv, BnMode::Infer, BN_EPSILON, BN_MOMENTUM)
            .unwrap();
        for (i, &x) in input.data().iter().enumerate() {
            let ch = i % c;
            let want = gamma.data()[ch] * (x - rm.data()[ch])
                / (rv.data()[ch] + BN_EPSILON).sqrt()
                + beta.data()[ch];
            assert!((out.output.data()[i] - want).abs() < TOL);
        }
    }
}

#[test]
fn kernels_stay_finite_on_finite_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let input = random_tensor(&mut rng, &[2, 6, 6, 3]);
    let weights = random_tensor(&mut rng, &[3, 3, 3, 4]);
    let spec = ConvSpec {
        kernel_h: 3,
        kernel_w: 3,
        in_channels: 3,
        out_channels: 4,
        stride: 1,
        padding: Padding::Same,
        use_bias: false,
    };
    let conv = conv2d(&input, &weights, None, &spec).unwrap();
    assert!(!conv.has_non_finite());
    let gamma = Tensor::filled(&[3], 1.0);
    let beta = Tensor::zeros(&[3]);
    let constant = Tensor::filled(&[1, 4, 4, 3], 3.0);
    let bn = batch_norm(&constant, &gamma, &beta, &beta, &gamma, BnMode::Train, BN_EPSILON, BN_MOMENTUM)
        .unwrap();
    assert!(!bn.output.has_non_finite());
}
