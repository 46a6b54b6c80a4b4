use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Floor applied inside the logarithm so a confident wrong prediction yields
/// a large finite loss instead of infinity.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of integer labels under `[N, K]` probability
/// rows: `-(1/N) sum ln(max(p[i, y_i], floor))`.
pub fn sparse_categorical_crossentropy<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
) -> Result<T> {
    probs.expect_rank("sparse_categorical_crossentropy", 2)?;
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if labels.len() != n {
        return Err(Error::Dimension {
            op: "sparse_categorical_crossentropy",
            axis: "labels",
            expected: n,
            got: labels.len(),
        });
    }
    let tol = T::from_f64(1e-5);
    for (i, row) in probs.data().chunks_exact(k).enumerate() {
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::Config {
                what: format!("probability row {i} sums to {sum}, expected 1"),
            });
        }
    }
    let floor = T::from_f64(PROB_FLOOR);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Label { index: i, value: y });
        }
        total += probs.data()[i * k + y].max(floor).ln();
    }
    Ok(-total / T::from_f64(n as f64))
}
