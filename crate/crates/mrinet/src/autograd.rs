//! Reverse-mode differentiation over an operation tape.
//!
//! Every kernel application is recorded in execution order together with the
//! saved state its backward rule needs (argmax routes, batch-norm statistics,
//! dropout masks). [`Tape::backward`] replays the records in exact reverse
//! order and accumulates gradients; a value used several times receives the
//! sum of the gradients from all of its uses.

use crate::error::{Error, Result};
use crate::kernels::activation::{activation, activation_backward, softmax, softmax_backward, Activation};
use crate::kernels::conv::{
    conv2d, conv2d_backward, depthwise_conv2d, depthwise_conv2d_backward, ConvSpec,
};
use crate::kernels::dense::{dense_affine, dense_affine_backward};
use crate::kernels::dropout::{dropout_backward, dropout_train};
use crate::kernels::norm::{batch_norm, batch_norm_backward, BnMode, BnSaved, BnUpdate};
use crate::kernels::padding::Padding;
use crate::kernels::pool::{
    global_average_pool, global_average_pool_backward, max_pool2d, max_pool2d_backward,
};
use crate::tensor::{Scalar, Tensor};

/// Handle to a tensor held by a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug)]
enum Record<T: Scalar> {
    Leaf,
    Conv2d { input: ValueId, weights: ValueId, bias: Option<ValueId>, spec: ConvSpec },
    DepthwiseConv2d {
        input: ValueId,
        weights: ValueId,
        bias: Option<ValueId>,
        stride: usize,
        padding: Padding,
    },
    MaxPool { input: ValueId, argmax: Vec<usize> },
    GlobalAvgPool { input: ValueId },
    Dense { input: ValueId, weights: ValueId, bias: ValueId },
    BatchNorm { input: ValueId, gamma: ValueId, beta: ValueId, saved: BnSaved<T> },
    Activation { input: ValueId, kind: Activation },
    Softmax { input: ValueId },
    DropoutTrain { input: ValueId, keep: Vec<bool>, rate: f64 },
    Identity { input: ValueId },
    Add { lhs: ValueId, rhs: ValueId },
    Mul { lhs: ValueId, rhs: ValueId },
    Sum { input: ValueId },
    GradScale { input: ValueId, factor: T },
    SoftmaxXent { logits: ValueId, probs: Tensor<T>, labels: Vec<usize> },
}

/// Ordered record of executed kernel applications plus their outputs.
#[derive(Debug, Default)]
pub struct Tape<T: Scalar> {
    values: Vec<Tensor<T>>,
    records: Vec<Record<T>>,
}

/// Gradient table produced by [`Tape::backward`], indexed by [`ValueId`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the seeded output with respect to `id`. Values the output
    /// does not depend on get a zero gradient of the right shape.
    pub fn get(&self, id: ValueId) -> Result<Tensor<T>> {
        let slot = self
            .grads
            .get(id.0)
            .ok_or(Error::TapeLookup { id: id.0, len: self.grads.len() })?;
        Ok(match slot {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        })
    }

    pub fn get_ref(&self, id: ValueId) -> Result<Option<&Tensor<T>>> {
        self.grads
            .get(id.0)
            .map(|s| s.as_ref())
            .ok_or(Error::TapeLookup { id: id.0, len: self.grads.len() })
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { values: Vec::new(), records: Vec::new() }
    }

    /// Drop all values and records, keeping allocations where possible.
    pub fn reset(&mut self) {
        self.values.clear();
        self.records.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ValueId) -> Result<&Tensor<T>> {
        self.values.get(id.0).ok_or(Error::TapeLookup { id: id.0, len: self.values.len() })
    }

    fn push(&mut self, value: Tensor<T>, record: Record<T>) -> ValueId {
        let id = ValueId(self.values.len());
        self.values.push(value);
        self.records.push(record);
        id
    }

    /// Place an input or parameter tensor on the tape.
    pub fn leaf(&mut self, value: Tensor<T>) -> ValueId {
        self.push(value, Record::Leaf)
    }

    pub fn conv2d(
        &mut self,
        input: ValueId,
        weights: ValueId,
        bias: Option<ValueId>,
        spec: ConvSpec,
    ) -> Result<ValueId> {
        let b = match bias {
            Some(id) => Some(self.value(id)?.clone()),
            None => None,
        };
        let out = conv2d(self.value(input)?, self.value(weights)?, b.as_ref(), &spec)?;
        Ok(self.push(out, Record::Conv2d { input, weights, bias, spec }))
    }

    pub fn depthwise_conv2d(
        &mut self,
        input: ValueId,
        weights: ValueId,
        bias: Option<ValueId>,
        stride: usize,
        padding: Padding,
    ) -> Result<ValueId> {
        let b = match bias {
            Some(id) => Some(self.value(id)?.clone()),
            None => None,
        };
        let out =
            depthwise_conv2d(self.value(input)?, self.value(weights)?, b.as_ref(), stride, padding)?;
        Ok(self.push(out, Record::DepthwiseConv2d { input, weights, bias, stride, padding }))
    }

    pub fn max_pool2d(
        &mut self,
        input: ValueId,
        window: (usize, usize),
        stride: usize,
        padding: Padding,
    ) -> Result<ValueId> {
        let (out, argmax) = max_pool2d(self.value(input)?, window, stride, padding)?;
        Ok(self.push(out, Record::MaxPool { input, argmax }))
    }

    pub fn global_average_pool(&mut self, input: ValueId) -> Result<ValueId> {
        let out = global_average_pool(self.value(input)?)?;
        Ok(self.push(out, Record::GlobalAvgPool { input }))
    }

    pub fn dense(&mut self, input: ValueId, weights: ValueId, bias: ValueId) -> Result<ValueId> {
        let out = {
            let b = self.value(bias)?.clone();
            dense_affine(self.value(input)?, self.value(weights)?, &b)?
        };
        Ok(self.push(out, Record::Dense { input, weights, bias }))
    }

    /// Batch normalization. In train mode the EMA update for the running
    /// statistics is returned to the caller, who owns that state.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        input: ValueId,
        gamma: ValueId,
        beta: ValueId,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        mode: BnMode,
        epsilon: f64,
        momentum: f64,
    ) -> Result<(ValueId, Option<BnUpdate<T>>)> {
        let out = {
            let g = self.value(gamma)?.clone();
            let b = self.value(beta)?.clone();
            batch_norm(self.value(input)?, &g, &b, running_mean, running_var, mode, epsilon, momentum)?
        };
        let id = self.push(out.output, Record::BatchNorm { input, gamma, beta, saved: out.saved });
        Ok((id, out.update))
    }

    pub fn activation(&mut self, input: ValueId, kind: Activation) -> Result<ValueId> {
        let out = activation(self.value(input)?, kind);
        Ok(self.push(out, Record::Activation { input, kind }))
    }

    pub fn softmax(&mut self, input: ValueId) -> Result<ValueId> {
        let out = softmax(self.value(input)?)?;
        Ok(self.push(out, Record::Softmax { input }))
    }

    /// Inverted dropout; infer mode is the identity (bitwise).
    pub fn dropout(
        &mut self,
        input: ValueId,
        rate: f64,
        train: bool,
        stream_seed: u64,
    ) -> Result<ValueId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config { what: format!("dropout rate must be in [0, 1), got {rate}") });
        }
        if !train {
            let out = self.value(input)?.clone();
            return Ok(self.push(out, Record::Identity { input }));
        }
        let (out, keep) = dropout_train(self.value(input)?, rate, stream_seed)?;
        Ok(self.push(out, Record::DropoutTrain { input, keep, rate }))
    }

    /// Elementwise sum of two same-shape tensors (shortcut connections).
    pub fn add(&mut self, lhs: ValueId, rhs: ValueId) -> Result<ValueId> {
        let (a, b) = (self.value(lhs)?, self.value(rhs)?);
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op: "add",
                axis: "shape",
                expected: a.len(),
                got: b.len(),
            });
        }
        let mut out = a.clone();
        out.add_assign(b);
        Ok(self.push(out, Record::Add { lhs, rhs }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, lhs: ValueId, rhs: ValueId) -> Result<ValueId> {
        let (a, b) = (self.value(lhs)?, self.value(rhs)?);
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op: "mul",
                axis: "shape",
                expected: a.len(),
                got: b.len(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.push(out, Record::Mul { lhs, rhs }))
    }

    /// Sum of all elements (scalar output).
    pub fn sum(&mut self, input: ValueId) -> Result<ValueId> {
        let total = self.value(input)?.data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(total), Record::Sum { input }))
    }

    /// Forward identity whose backward multiplies the gradient by `factor`.
    /// `factor != 1` makes the analytic gradient deliberately wrong, which is
    /// the negative control for the finite-difference checker.
    pub fn grad_scale(&mut self, input: ValueId, factor: T) -> Result<ValueId> {
        let out = self.value(input)?.clone();
        Ok(self.push(out, Record::GradScale { input, factor }))
    }

    /// Fused softmax + sparse categorical cross-entropy over `[N, K]` logits.
    /// Returns the scalar mean loss and a detached copy of the probabilities.
    /// The fused backward rule `(p - onehot)/N` avoids dividing by small
    /// probabilities.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: ValueId,
        labels: &[usize],
    ) -> Result<(ValueId, Tensor<T>)> {
        let logits_t = self.value(logits)?;
        logits_t.expect_rank("softmax_cross_entropy", 2)?;
        let (n, k) = (logits_t.shape()[0], logits_t.shape()[1]);
        if labels.len() != n {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                axis: "labels",
                expected: n,
                got: labels.len(),
            });
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::Label { index: i, value: y });
            }
        }
        let probs = softmax(logits_t)?;
        let floor = T::from_f64(crate::training::loss::PROB_FLOOR);
        let mut total = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            total += probs.data()[i * k + y].max(floor).ln();
        }
        let loss = -total / T::from_f64(n as f64);
        let id = self.push(
            Tensor::scalar(loss),
            Record::SoftmaxXent { logits, probs: probs.clone(), labels: labels.to_vec() },
        );
        Ok((id, probs))
    }

    /// Reverse-mode accumulation seeded with `seed` at `output`. `seed` is the
    /// gradient of the (scalar) objective with respect to `output` and must
    /// match its shape.
    pub fn backward(&self, output: ValueId, seed: &Tensor<T>) -> Result<Gradients<T>> {
        let out_t = self.value(output)?;
        if out_t.shape() != seed.shape() {
            return Err(Error::Dimension {
                op: "backward",
                axis: "seed shape",
                expected: out_t.len(),
                got: seed.len(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.values.len()];
        grads[output.0] = Some(seed.clone());

        for i in (0..=output.0).rev() {
            let Some(dy) = grads[i].take() else {
                continue;
            };
            match &self.records[i] {
                Record::Leaf => {
                    grads[i] = Some(dy);
                    continue;
                }
                Record::Conv2d { input, weights, bias, spec } => {
                    let (dx, dw, db) =
                        conv2d_backward(&self.values[input.0], &self.values[weights.0], spec, &dy);
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *weights, dw);
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Record::DepthwiseConv2d { input, weights, bias, stride, padding } => {
                    let (dx, dw, db) = depthwise_conv2d_backward(
                        &self.values[input.0],
                        &self.values[weights.0],
                        *stride,
                        *padding,
                        &dy,
                    );
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *weights, dw);
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Record::MaxPool { input, argmax } => {
                    let dx = max_pool2d_backward(self.values[input.0].shape(), argmax, &dy);
                    accumulate(&mut grads, *input, dx);
                }
                Record::GlobalAvgPool { input } => {
                    let dx = global_average_pool_backward(self.values[input.0].shape(), &dy);
                    accumulate(&mut grads, *input, dx);
                }
                Record::Dense { input, weights, bias } => {
                    let (dx, dw, db) =
                        dense_affine_backward(&self.values[input.0], &self.values[weights.0], &dy);
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *weights, dw);
                    accumulate(&mut grads, *bias, db);
                }
                Record::BatchNorm { input, gamma, beta, saved } => {
                    let (dx, dg, db) = batch_norm_backward(
                        &self.values[input.0],
                        &self.values[gamma.0],
                        saved,
                        &dy,
                    );
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *gamma, dg);
                    accumulate(&mut grads, *beta, db);
                }
                Record::Activation { input, kind } => {
                    let dx = activation_backward(&self.values[input.0], *kind, &dy);
                    accumulate(&mut grads, *input, dx);
                }
                Record::Softmax { input } => {
                    let dx = softmax_backward(&self.values[i], &dy);
                    accumulate(&mut grads, *input, dx);
                }
                Record::DropoutTrain { input, keep, rate } => {
                    let dx = dropout_backward(keep, *rate, &dy);
                    accumulate(&mut grads, *input, dx);
                }
                Record::Identity { input } => {
                    accumulate(&mut grads, *input, dy);
                }
                Record::Add { lhs, rhs } => {
                    accumulate(&mut grads, *lhs, dy.clone());
                    accumulate(&mut grads, *rhs, dy);
                }
                Record::Mul { lhs, rhs } => {
                    let da = elementwise_mul(&dy, &self.values[rhs.0]);
                    let db = elementwise_mul(&dy, &self.values[lhs.0]);
                    accumulate(&mut grads, *lhs, da);
                    accumulate(&mut grads, *rhs, db);
                }
                Record::Sum { input } => {
                    let dx = Tensor::filled(self.values[input.0].shape(), dy.scalar_value());
                    accumulate(&mut grads, *input, dx);
                }
                Record::GradScale { input, factor } => {
                    accumulate(&mut grads, *input, dy.scale(*factor));
                }
                Record::SoftmaxXent { logits, probs, labels } => {
                    let k = probs.shape()[1];
                    let n = labels.len();
                    let scale = dy.scalar_value() / T::from_f64(n as f64);
                    let mut dx = probs.clone();
                    for (row, &y) in dx.data_mut().chunks_exact_mut(k).zip(labels.iter()) {
                        row[y] -= T::one();
                        for v in row.iter_mut() {
                            *v = *v * scale;
                        }
                    }
                    accumulate(&mut grads, *logits, dx);
                }
            }
        }
        let shapes = self.values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    /// Backward for a scalar output, seeded with 1.
    pub fn backward_scalar(&self, output: ValueId) -> Result<Gradients<T>> {
        let out = self.value(output)?;
        if out.len() != 1 {
            return Err(Error::Dimension {
                op: "backward_scalar",
                axis: "output elements",
                expected: 1,
                got: out.len(),
            });
        }
        let seed = Tensor::filled(out.shape(), T::one());
        self.backward(output, &seed)
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: ValueId, g: Tensor<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn elementwise_mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("elementwise shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_weight_gradient_is_input_outer_ones() {
        // loss = sum(x . I + 0) => dW = x^T . ones
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![2.0, -1.0, 0.5]).unwrap());
        let w = tape.leaf(Tensor::from_fn(&[3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 }));
        let b = tape.leaf(Tensor::zeros(&[3]));
        let y = tape.dense(x, w, b).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward_scalar(loss).unwrap();
        let dw = grads.get(w).unwrap();
        let expect = [2.0, 2.0, 2.0, -1.0, -1.0, -1.0, 0.5, 0.5, 0.5];
        assert_eq!(dw.data(), &expect);
        let db = grads.get(b).unwrap();
        assert_eq!(db.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn weight_reuse_sums_gradients() {
        // y = x*x (elementwise via mul with itself), loss = sum(y) => d/dx = 2x
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward_scalar(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn lookup_error_for_foreign_id() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward_scalar(loss).unwrap();
        let bogus = ValueId(99);
        assert!(matches!(grads.get(bogus), Err(Error::TapeLookup { .. })));
        assert!(matches!(tape.value(bogus), Err(Error::TapeLookup { .. })));
    }

    #[test]
    fn unused_value_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(Tensor::new(vec![2], vec![5.0, 6.0]).unwrap());
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward_scalar(loss).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_xent_uniform_loss_is_ln_k() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 5]));
        let (loss, probs) = tape.softmax_cross_entropy(logits, &[1, 4]).unwrap();
        assert!((tape.value(loss).unwrap().scalar_value() - 5.0f64.ln()).abs() < 1e-12);
        assert!(probs.data().iter().all(|&p| (p - 0.2).abs() < 1e-12));
    }

    #[test]
    fn softmax_xent_rejects_bad_label() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 5]));
        let err = tape.softmax_cross_entropy(logits, &[5]).unwrap_err();
        assert!(matches!(err, Error::Label { index: 0, value: 5 }));
    }
}
