use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Inverted dropout. Train mode zeroes each element independently with
/// probability `rate` and scales survivors by `1/(1-rate)`, so inference is
/// the identity. The mask is drawn from a stream seeded by `stream_seed`,
/// which makes every application reproducible.
pub fn dropout_train<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    stream_seed: u64,
) -> Result<(Tensor<T>, Vec<bool>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config { what: format!("dropout rate must be in [0, 1), got {rate}") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let scale = T::from_f64(1.0 / (1.0 - rate));
    let mut keep = vec![true; input.len()];
    let mut out = input.clone();
    for (o, k) in out.data_mut().iter_mut().zip(keep.iter_mut()) {
        if rng.gen::<f64>() < rate {
            *o = T::zero();
            *k = false;
        } else {
            *o = *o * scale;
        }
    }
    Ok((out, keep))
}

/// Replay a saved mask on the incoming gradient.
pub fn dropout_backward<T: Scalar>(keep: &[bool], rate: f64, grad_out: &Tensor<T>) -> Tensor<T> {
    let scale = T::from_f64(1.0 / (1.0 - rate));
    let mut grad = Tensor::zeros(grad_out.shape());
    for ((g, &dy), &k) in grad.data_mut().iter_mut().zip(grad_out.data()).zip(keep.iter()) {
        if k {
            *g = dy * scale;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_zero_is_identity() {
        let input = Tensor::<f64>::new(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let (out, keep) = dropout_train(&input, 0.0, 7).unwrap();
        assert_eq!(out.data(), input.data());
        assert!(keep.iter().all(|&k| k));
    }

    #[test]
    fn rate_one_is_rejected() {
        let input = Tensor::<f64>::zeros(&[2]);
        assert!(dropout_train(&input, 1.0, 0).is_err());
        assert!(dropout_train(&input, 1.5, 0).is_err());
    }

    #[test]
    fn expectation_is_preserved() {
        let input = Tensor::<f64>::filled(&[100_000], 1.0);
        let (out, _) = dropout_train(&input, 0.2, 42).unwrap();
        let mean: f64 = out.data().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn same_seed_same_mask() {
        let input = Tensor::<f64>::filled(&[64], 1.0);
        let (a, _) = dropout_train(&input, 0.5, 99).unwrap();
        let (b, _) = dropout_train(&input, 0.5, 99).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
