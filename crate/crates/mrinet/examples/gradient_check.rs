//! Verify reverse-mode gradients against central finite differences: a
//! convolution kernel, a fused softmax/cross-entropy loss, and a deliberately
//! corrupted backward rule that the checker must reject.
//!
//! Run with: cargo run --example gradient_check

use mrinet::fdcheck::{finite_difference_check_with, FdOptions};
use mrinet::kernels::{ConvSpec, Padding};
use mrinet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mrinet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let opts = FdOptions { max_probes: Some(100), ..FdOptions::default() };

    let spec = ConvSpec {
        kernel_h: 3,
        kernel_w: 3,
        in_channels: 3,
        out_channels: 4,
        stride: 2,
        padding: Padding::Same,
        use_bias: true,
    };
    let weights = Tensor::from_fn(&[3, 3, 3, 4], |_| rng.gen_range(-0.5..0.5));
    let bias = Tensor::from_fn(&[4], |_| rng.gen_range(-0.1..0.1));
    let point = Tensor::from_fn(&[2, 6, 6, 3], |_| rng.gen_range(-1.0..1.0));
    let report = finite_difference_check_with(
        |tape, x| {
            let w = tape.leaf(weights.clone());
            let b = tape.leaf(bias.clone());
            let y = tape.conv2d(x, w, Some(b), spec)?;
            tape.sum(y)
        },
        &point,
        1e-5,
        &opts,
    )?;
    println!(
        "conv2d:           max rel error {:.3e} over {} probes -> {}",
        report.max_rel_error,
        report.probes,
        if report.passed() { "ok" } else { "MISMATCH" }
    );

    let logits = Tensor::from_fn(&[4, 5], |_| rng.gen_range(-2.0..2.0));
    let report = finite_difference_check_with(
        |tape, x| {
            let (loss, _) = tape.softmax_cross_entropy(x, &[0, 3, 2, 4])?;
            Ok(loss)
        },
        &logits,
        1e-5,
        &opts,
    )?;
    println!(
        "softmax+xent:     max rel error {:.3e} over {} probes -> {}",
        report.max_rel_error,
        report.probes,
        if report.passed() { "ok" } else { "MISMATCH" }
    );

    // negative control: grad_scale(1.01) corrupts the backward rule by 1%
    let point = Tensor::from_fn(&[16], |_| rng.gen_range(0.5..2.0));
    let report = finite_difference_check_with(
        |tape, x| {
            let bad = tape.grad_scale(x, 1.01)?;
            let sq = tape.mul(bad, bad)?;
            tape.sum(sq)
        },
        &point,
        1e-5,
        &FdOptions::default(),
    )?;
    println!(
        "corrupted rule:   max rel error {:.3e} -> {} (must be a mismatch)",
        report.max_rel_error,
        if report.passed() { "ok" } else { "MISMATCH" }
    );
    assert!(!report.passed(), "the checker failed to catch a corrupted backward rule");
    Ok(())
}
