//! Batch normalization over the channel axis of NHWC tensors.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Train mode normalizes by batch statistics and reports updated running
/// stats; infer mode normalizes by the provided running stats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Per-channel state saved at forward time, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct BnSaved<T: Scalar> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

/// New running statistics after a train-mode forward (EMA with `momentum`).
#[derive(Debug, Clone)]
pub struct BnUpdate<T: Scalar> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

pub struct BnOutput<T: Scalar> {
    pub output: Tensor<T>,
    pub saved: BnSaved<T>,
    pub update: Option<BnUpdate<T>>,
}

#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: BnMode,
    epsilon: f64,
    momentum: f64,
) -> Result<BnOutput<T>> {
    input.expect_rank("batch_norm", 4)?;
    let ishape = input.shape();
    let (n, h, w, c) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    for (name, t) in [("gamma", gamma), ("beta", beta), ("running mean", running_mean), ("running var", running_var)] {
        if t.len() != c {
            return Err(Error::Dimension { op: "batch_norm", axis: name, expected: c, got: t.len() });
        }
    }
    let m = n * h * w;
    if mode == BnMode::Train && m < 2 {
        return Err(Error::Dimension { op: "batch_norm", axis: "batch elements (N*H*W)", expected: 2, got: m });
    }

    let eps = T::from_f64(epsilon);
    let (mean, inv_std, update) = match mode {
        BnMode::Train => {
            let inv_m = T::one() / T::from_f64(m as f64);
            let mut mean = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for (acc, &x) in mean.iter_mut().zip(row.iter()) {
                    *acc += x;
                }
            }
            for v in mean.iter_mut() {
                *v *= inv_m;
            }
            // biased variance; also used for the running update
            let mut var = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for ((acc, &x), &mu) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                    let d = x - mu;
                    *acc += d * d;
                }
            }
            for v in var.iter_mut() {
                *v *= inv_m;
            }
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

            let mom = T::from_f64(momentum);
            let one_minus = T::one() - mom;
            let new_mean = Tensor::new(
                vec![c],
                running_mean
                    .data()
                    .iter()
                    .zip(mean.iter())
                    .map(|(&r, &b)| r * mom + b * one_minus)
                    .collect(),
            )?;
            let new_var = Tensor::new(
                vec![c],
                running_var
                    .data()
                    .iter()
                    .zip(var.iter())
                    .map(|(&r, &b)| r * mom + b * one_minus)
                    .collect(),
            )?;
            (mean, inv_std, Some(BnUpdate { running_mean: new_mean, running_var: new_var }))
        }
        BnMode::Infer => {
            let mean = running_mean.data().to_vec();
            let inv_std: Vec<T> =
                running_var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            (mean, inv_std, None)
        }
    };

    let mut out = Tensor::zeros(ishape);
    let (gd, bd) = (gamma.data(), beta.data());
    for (orow, irow) in out.data_mut().chunks_exact_mut(c).zip(input.data().chunks_exact(c)) {
        for ch in 0..c {
            orow[ch] = gd[ch] * (irow[ch] - mean[ch]) * inv_std[ch] + bd[ch];
        }
    }
    Ok(BnOutput { output: out, saved: BnSaved { mean, inv_std, train: mode == BnMode::Train }, update })
}

/// Gradients with respect to input, gamma, and beta.
///
/// In train mode the batch statistics depend on the input, so the input
/// gradient carries the two correction terms; in infer mode the statistics
/// are constants.
pub fn batch_norm_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    saved: &BnSaved<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let ishape = input.shape();
    let c = ishape[3];
    let m = input.len() / c;
    let inv_m = T::one() / T::from_f64(m as f64);

    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for (irow, grow) in input.data().chunks_exact(c).zip(grad_out.data().chunks_exact(c)) {
        for ch in 0..c {
            let xhat = (irow[ch] - saved.mean[ch]) * saved.inv_std[ch];
            dgamma[ch] += grow[ch] * xhat;
            dbeta[ch] += grow[ch];
            sum_dy[ch] += grow[ch];
            sum_dy_xhat[ch] += grow[ch] * xhat;
        }
    }

    let mut dinput = Tensor::zeros(ishape);
    let gd = gamma.data();
    if saved.train {
        for ((irow, grow), drow) in input
            .data()
            .chunks_exact(c)
            .zip(grad_out.data().chunks_exact(c))
            .zip(dinput.data_mut().chunks_exact_mut(c))
        {
            for ch in 0..c {
                let xhat = (irow[ch] - saved.mean[ch]) * saved.inv_std[ch];
                drow[ch] = gd[ch]
                    * saved.inv_std[ch]
                    * (grow[ch] - sum_dy[ch] * inv_m - xhat * sum_dy_xhat[ch] * inv_m);
            }
        }
    } else {
        for (grow, drow) in grad_out.data().chunks_exact(c).zip(dinput.data_mut().chunks_exact_mut(c)) {
            for ch in 0..c {
                drow[ch] = gd[ch] * saved.inv_std[ch] * grow[ch];
            }
        }
    }
    let dgamma = Tensor::new(vec![c], dgamma).expect("dgamma shape");
    let dbeta = Tensor::new(vec![c], dbeta).expect("dbeta shape");
    (dinput, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_params(c: usize) -> (Tensor<f64>, Tensor<f64>, Tensor<f64>, Tensor<f64>) {
        (
            Tensor::filled(&[c], 1.0),
            Tensor::zeros(&[c]),
            Tensor::zeros(&[c]),
            Tensor::filled(&[c], 1.0),
        )
    }

    #[test]
    fn train_mode_normalizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = Tensor::<f64>::from_fn(&[2, 4, 4, 3], |_| rng.gen_range(-3.0..3.0));
        let (g, b, rm, rv) = identity_params(3);
        let out = batch_norm(&input, &g, &b, &rm, &rv, BnMode::Train, BN_EPSILON, BN_MOMENTUM).unwrap();
        let m = 2.0 * 4.0 * 4.0;
        for ch in 0..3 {
            let vals: Vec<f64> =
                out.output.data().iter().skip(ch).step_by(3).copied().collect();
            let mean: f64 = vals.iter().sum::<f64>() / m;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn constant_channel_maps_to_zero_not_nan() {
        let input = Tensor::<f64>::filled(&[1, 3, 3, 2], 4.2);
        let (g, b, rm, rv) = identity_params(2);
        let out = batch_norm(&input, &g, &b, &rm, &rv, BnMode::Train, BN_EPSILON, BN_MOMENTUM).unwrap();
        assert!(out.output.data().iter().all(|&v| v == 0.0));
        assert!(!out.output.has_non_finite());
    }

    #[test]
    fn infer_mode_matches_the_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let input = Tensor::<f64>::from_fn(&[1, 2, 2, 2], |_| rng.gen_range(-2.0..2.0));
        let gamma = Tensor::new(vec![2], vec![1.5, 0.5]).unwrap();
        let beta = Tensor::new(vec![2], vec![0.25, -1.0]).unwrap();
        let rm = Tensor::new(vec![2], vec![0.3, -0.2]).unwrap();
        let rv = Tensor::new(vec![2], vec![2.0, 0.7]).unwrap();
        let out =
            batch_norm(&input, &gamma, &beta, &rm, &rv, BnMode::Infer, BN_EPSILON, BN_MOMENTUM)
                .unwrap();
        for (i, &x) in input.data().iter().enumerate() {
            let ch = i % 2;
            let expect = gamma.data()[ch] * (x - rm.data()[ch]) / (rv.data()[ch] + BN_EPSILON).sqrt()
                + beta.data()[ch];
            assert!((out.output.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_needs_two_elements() {
        let input = Tensor::<f64>::zeros(&[1, 1, 1, 4]);
        let (g, b, rm, rv) = identity_params(4);
        assert!(batch_norm(&input, &g, &b, &rm, &rv, BnMode::Train, BN_EPSILON, BN_MOMENTUM).is_err());
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let input = Tensor::<f64>::new(
            vec![1, 2, 1, 1],
            vec![1.0, 3.0], // mean 2, biased var 1
        )
        .unwrap();
        let (g, b, rm, rv) = identity_params(1);
        let out = batch_norm(&input, &g, &b, &rm, &rv, BnMode::Train, BN_EPSILON, 0.99).unwrap();
        let upd = out.update.unwrap();
        assert!((upd.running_mean.data()[0] - 0.02).abs() < 1e-12);
        // 0.99 * 1.0 + 0.01 * 1.0
        assert!((upd.running_var.data()[0] - 1.0).abs() < 1e-12);
    }
}
