use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Elementwise activation kind. `Relu6` clamps at 6 on the positive side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Relu6,
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let six = T::from_f64(6.0);
    match kind {
        Activation::Relu => input.map(|x| x.max(T::zero())),
        Activation::Relu6 => input.map(|x| x.max(T::zero()).min(six)),
    }
}

/// Subgradient 0 is used at the kinks (x = 0 and, for relu6, x = 6).
pub fn activation_backward<T: Scalar>(
    input: &Tensor<T>,
    kind: Activation,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let six = T::from_f64(6.0);
    let mut grad = Tensor::zeros(input.shape());
    for ((g, &x), &dy) in grad.data_mut().iter_mut().zip(input.data()).zip(grad_out.data()) {
        let pass = match kind {
            Activation::Relu => x > T::zero(),
            Activation::Relu6 => x > T::zero() && x < six,
        };
        if pass {
            *g = dy;
        }
    }
    grad
}

/// Row softmax over `[N, K]` logits, computed with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    logits.expect_rank("softmax", 2)?;
    let k = logits.shape()[1];
    let mut out = Tensor::zeros(logits.shape());
    for (orow, irow) in out.data_mut().chunks_exact_mut(k).zip(logits.data().chunks_exact(k)) {
        let mut max = irow[0];
        for &x in &irow[1..] {
            if x > max {
                max = x;
            }
        }
        let mut sum = T::zero();
        for (o, &x) in orow.iter_mut().zip(irow.iter()) {
            *o = (x - max).exp();
            sum += *o;
        }
        let inv = T::one() / sum;
        for o in orow.iter_mut() {
            *o *= inv;
        }
    }
    Ok(out)
}

/// dL/dx_i = p_i * (dL/dp_i - sum_j dL/dp_j * p_j), per row.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let k = probs.shape()[1];
    let mut grad = Tensor::zeros(probs.shape());
    for ((drow, prow), grow) in grad
        .data_mut()
        .chunks_exact_mut(k)
        .zip(probs.data().chunks_exact(k))
        .zip(grad_out.data().chunks_exact(k))
    {
        let mut dot = T::zero();
        for (&p, &g) in prow.iter().zip(grow.iter()) {
            dot += p * g;
        }
        for ((d, &p), &g) in drow.iter_mut().zip(prow.iter()).zip(grow.iter()) {
            *d = p * (g - dot);
        }
    }
    grad
}
