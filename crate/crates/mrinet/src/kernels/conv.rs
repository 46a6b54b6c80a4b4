//! 2-D convolution kernels (cross-correlation, no kernel flip).
//!
//! Inputs are NHWC; weights are `[kh, kw, Cin, Cout]`. The dense path lowers
//! each input to a patch matrix (im2col) whose column order `(kh, kw, cin)`
//! matches the row-major weight layout, so the convolution is a single matmul.

use serde::{Deserialize, Serialize};

use super::matmul::{matmul, matmul_a_bt, matmul_at_b};
use super::padding::{out_dim, pad_before, Padding};
use crate::error::{Error, Result};
use crate::tensor::{idx4, Scalar, Tensor};

/// Static description of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: Padding,
    pub use_bias: bool,
}

impl ConvSpec {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let oh = out_dim("conv2d", input[1], self.kernel_h, self.stride, self.padding)?;
        let ow = out_dim("conv2d", input[2], self.kernel_w, self.stride, self.padding)?;
        Ok(vec![input[0], oh, ow, self.out_channels])
    }

    fn check(&self, input: &Tensor<impl Scalar>, weights: &Tensor<impl Scalar>) -> Result<()> {
        input.expect_rank("conv2d", 4)?;
        weights.expect_rank("conv2d", 4)?;
        if input.shape()[3] != self.in_channels {
            return Err(Error::Dimension {
                op: "conv2d",
                axis: "input channels",
                expected: self.in_channels,
                got: input.shape()[3],
            });
        }
        let expected_w = [self.kernel_h, self.kernel_w, self.in_channels, self.out_channels];
        for (axis, (&want, &got)) in ["kernel_h", "kernel_w", "weight Cin", "weight Cout"]
            .iter()
            .zip(expected_w.iter().zip(weights.shape()))
            .map(|(a, p)| (*a, p))
        {
            if want != got {
                return Err(Error::Dimension { op: "conv2d", axis, expected: want, got });
            }
        }
        Ok(())
    }
}

/// Lower NHWC input patches to a `[n*oh*ow, kh*kw*cin]` matrix. Out-of-bounds
/// taps read as zero.
fn im2col<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec, oh: usize, ow: usize) -> Vec<T> {
    let ishape = input.shape();
    let (n, h, w, cin) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let pt = pad_before(h, spec.kernel_h, spec.stride, spec.padding);
    let pl = pad_before(w, spec.kernel_w, spec.stride, spec.padding);
    let patch = spec.kernel_h * spec.kernel_w * cin;
    let mut cols = vec![T::zero(); n * oh * ow * patch];
    let data = input.data();
    let mut row = 0usize;
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = row * patch;
                for ky in 0..spec.kernel_h {
                    let iy = (oy * spec.stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..spec.kernel_w {
                        let ix = (ox * spec.stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = idx4(ishape, b, iy as usize, ix as usize, 0);
                        let dst = base + (ky * spec.kernel_w + kx) * cin;
                        cols[dst..dst + cin].copy_from_slice(&data[src..src + cin]);
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Scatter-add a patch-matrix gradient back onto the input grid (inverse of
/// `im2col` with accumulation on overlaps).
fn col2im_accumulate<T: Scalar>(
    dcols: &[T],
    ishape: &[usize],
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
) -> Tensor<T> {
    let (n, h, w, cin) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let pt = pad_before(h, spec.kernel_h, spec.stride, spec.padding);
    let pl = pad_before(w, spec.kernel_w, spec.stride, spec.padding);
    let patch = spec.kernel_h * spec.kernel_w * cin;
    let mut grad = Tensor::zeros(ishape);
    let out = grad.data_mut();
    let mut row = 0usize;
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = row * patch;
                for ky in 0..spec.kernel_h {
                    let iy = (oy * spec.stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..spec.kernel_w {
                        let ix = (ox * spec.stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let dst = idx4(ishape, b, iy as usize, ix as usize, 0);
                        let src = base + (ky * spec.kernel_w + kx) * cin;
                        for c in 0..cin {
                            out[dst + c] += dcols[src + c];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    grad
}

/// Dense 2-D convolution plus optional bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check(input, weights)?;
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::Dimension {
                op: "conv2d",
                axis: "bias",
                expected: spec.out_channels,
                got: b.len(),
            });
        }
    }
    let oshape = spec.output_shape(input.shape())?;
    let (n, oh, ow, cout) = (oshape[0], oshape[1], oshape[2], oshape[3]);
    let patch = spec.kernel_h * spec.kernel_w * spec.in_channels;
    let cols = im2col(input, spec, oh, ow);
    let mut out = Tensor::zeros(&oshape);
    matmul(&cols, weights.data(), n * oh * ow, patch, cout, out.data_mut());
    if let Some(b) = bias {
        let bd = b.data();
        for row in out.data_mut().chunks_exact_mut(cout) {
            for (o, &bv) in row.iter_mut().zip(bd.iter()) {
                *o += bv;
            }
        }
    }
    Ok(out)
}

/// Reverse-mode gradients of `conv2d` with respect to input, weights, and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let oshape = grad_out.shape();
    let (n, oh, ow, cout) = (oshape[0], oshape[1], oshape[2], oshape[3]);
    let m = n * oh * ow;
    let patch = spec.kernel_h * spec.kernel_w * spec.in_channels;

    let cols = im2col(input, spec, oh, ow);

    // dW[K,Cout] = cols^T[K,M] * dY[M,Cout]
    let mut dweights = Tensor::zeros(weights.shape());
    matmul_at_b(&cols, grad_out.data(), m, patch, cout, dweights.data_mut());

    // dCols[M,K] = dY[M,Cout] * W^T[Cout,K]
    let mut dcols = vec![T::zero(); m * patch];
    matmul_a_bt(grad_out.data(), weights.data(), m, cout, patch, &mut dcols);
    let dinput = col2im_accumulate(&dcols, input.shape(), spec, oh, ow);

    let mut dbias = Tensor::zeros(&[cout]);
    let db = dbias.data_mut();
    for row in grad_out.data().chunks_exact(cout) {
        for (d, &g) in db.iter_mut().zip(row.iter()) {
            *d += g;
        }
    }
    (dinput, dweights, dbias)
}

/// Depthwise convolution: channel `c` of the output depends only on channel
/// `c` of the input. Weights are `[kh, kw, C, 1]` (multiplier fixed to 1).
pub fn depthwise_conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    input.expect_rank("depthwise_conv2d", 4)?;
    weights.expect_rank("depthwise_conv2d", 4)?;
    let ishape = input.shape();
    let (n, h, w, c) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (kh, kw) = (weights.shape()[0], weights.shape()[1]);
    if weights.shape()[2] != c {
        return Err(Error::Dimension {
            op: "depthwise_conv2d",
            axis: "channels",
            expected: c,
            got: weights.shape()[2],
        });
    }
    if weights.shape()[3] != 1 {
        return Err(Error::Dimension {
            op: "depthwise_conv2d",
            axis: "channel multiplier",
            expected: 1,
            got: weights.shape()[3],
        });
    }
    if let Some(b) = bias {
        if b.shape() != [c] {
            return Err(Error::Dimension {
                op: "depthwise_conv2d",
                axis: "bias",
                expected: c,
                got: b.len(),
            });
        }
    }
    let oh = out_dim("depthwise_conv2d", h, kh, stride, padding)?;
    let ow = out_dim("depthwise_conv2d", w, kw, stride, padding)?;
    let pt = pad_before(h, kh, stride, padding);
    let pl = pad_before(w, kw, stride, padding);

    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let oshape = [n, oh, ow, c];
    let data = input.data();
    let wd = weights.data();
    let od = out.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = idx4(&oshape, b, oy, ox, 0);
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let ibase = idx4(ishape, b, iy as usize, ix as usize, 0);
                        let wbase = (ky * kw + kx) * c;
                        for ch in 0..c {
                            od[obase + ch] += data[ibase + ch] * wd[wbase + ch];
                        }
                    }
                }
                if let Some(bt) = bias {
                    for (o, &bv) in od[obase..obase + c].iter_mut().zip(bt.data()) {
                        *o += bv;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reverse-mode gradients of `depthwise_conv2d`.
pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let ishape = input.shape();
    let (n, h, w, c) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (kh, kw) = (weights.shape()[0], weights.shape()[1]);
    let oshape = grad_out.shape();
    let (oh, ow) = (oshape[1], oshape[2]);
    let pt = pad_before(h, kh, stride, padding);
    let pl = pad_before(w, kw, stride, padding);

    let mut dinput = Tensor::zeros(ishape);
    let mut dweights = Tensor::zeros(weights.shape());
    let mut dbias = Tensor::zeros(&[c]);
    let (xd, wd, gd) = (input.data(), weights.data(), grad_out.data());
    let di = dinput.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = idx4(oshape, b, oy, ox, 0);
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let ibase = idx4(ishape, b, iy as usize, ix as usize, 0);
                        let wbase = (ky * kw + kx) * c;
                        for ch in 0..c {
                            let g = gd[obase + ch];
                            di[ibase + ch] += wd[wbase + ch] * g;
                            dweights.data_mut()[wbase + ch] += xd[ibase + ch] * g;
                        }
                    }
                }
                for ch in 0..c {
                    dbias.data_mut()[ch] += gd[obase + ch];
                }
            }
        }
    }
    (dinput, dweights, dbias)
}
