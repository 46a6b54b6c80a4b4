use super::matmul::{matmul, matmul_a_bt, matmul_at_b};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `out[N,U] = input[N,D] . weights[D,U] + bias[U]` (bias broadcast over rows).
pub fn dense_affine<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    input.expect_rank("dense_affine", 2)?;
    weights.expect_rank("dense_affine", 2)?;
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let (wd, u) = (weights.shape()[0], weights.shape()[1]);
    if d != wd {
        return Err(Error::Dimension { op: "dense_affine", axis: "inner dimension", expected: d, got: wd });
    }
    if bias.len() != u {
        return Err(Error::Dimension { op: "dense_affine", axis: "bias", expected: u, got: bias.len() });
    }
    let mut out = Tensor::zeros(&[n, u]);
    matmul(input.data(), weights.data(), n, d, u, out.data_mut());
    let bd = bias.data();
    for row in out.data_mut().chunks_exact_mut(u) {
        for (o, &b) in row.iter_mut().zip(bd.iter()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Gradients: `dW = x^T dy`, `db = sum_rows dy`, `dx = dy W^T`.
pub fn dense_affine_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let u = weights.shape()[1];
    let mut dweights = Tensor::zeros(&[d, u]);
    matmul_at_b(input.data(), grad_out.data(), n, d, u, dweights.data_mut());
    let mut dinput = Tensor::zeros(&[n, d]);
    matmul_a_bt(grad_out.data(), weights.data(), n, u, d, dinput.data_mut());
    let mut dbias = Tensor::zeros(&[u]);
    let db = dbias.data_mut();
    for row in grad_out.data().chunks_exact(u) {
        for (b, &g) in db.iter_mut().zip(row.iter()) {
            *b += g;
        }
    }
    (dinput, dweights, dbias)
}
