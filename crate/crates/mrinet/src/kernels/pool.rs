use super::padding::{out_dim, pad_before, Padding};
use crate::error::Result;
use crate::tensor::{idx4, Scalar, Tensor};

/// Max pooling over NHWC input. Returns the pooled tensor and, per output
/// element, the flat input index of its maximum (first occurrence in
/// row-major window scan — this fixes the gradient route on ties).
///
/// Same-padding windows are clipped to the valid region, which is equivalent
/// to padding with negative infinity.
pub fn max_pool2d<T: Scalar>(
    input: &Tensor<T>,
    window: (usize, usize),
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Vec<usize>)> {
    input.expect_rank("max_pool2d", 4)?;
    let ishape = input.shape();
    let (n, h, w, c) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (kh, kw) = window;
    let oh = out_dim("max_pool2d", h, kh, stride, padding)?;
    let ow = out_dim("max_pool2d", w, kw, stride, padding)?;
    let pt = pad_before(h, kh, stride, padding);
    let pl = pad_before(w, kw, stride, padding);

    let oshape = [n, oh, ow, c];
    let mut out = Tensor::zeros(&oshape);
    let mut argmax = vec![0usize; out.len()];
    let data = input.data();
    let od = out.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = idx4(&oshape, b, oy, ox, 0);
                for ch in 0..c {
                    let mut best = T::neg_infinity();
                    let mut best_idx = usize::MAX;
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
                            let idx = idx4(ishape, b, iy as usize, ix as usize, ch);
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    od[obase + ch] = best;
                    argmax[obase + ch] = best_idx;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Gradient of max pooling: each output gradient flows to its argmax element.
pub fn max_pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut grad = Tensor::zeros(input_shape);
    let gd = grad.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gd[idx] += g;
    }
    grad
}

/// Mean over the spatial dims: NHWC -> [N, C].
pub fn global_average_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_rank("global_average_pool", 4)?;
    let ishape = input.shape();
    let (n, h, w, c) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let inv = T::one() / T::from_f64((h * w) as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let data = input.data();
    let od = out.data_mut();
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let base = idx4(ishape, b, y, x, 0);
                for ch in 0..c {
                    od[b * c + ch] += data[base + ch];
                }
            }
        }
        for ch in 0..c {
            od[b * c + ch] *= inv;
        }
    }
    Ok(out)
}

/// Gradient of global average pooling: spread evenly over the spatial grid.
pub fn global_average_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (n, h, w, c) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    let inv = T::one() / T::from_f64((h * w) as f64);
    let mut grad = Tensor::zeros(input_shape);
    let gd = grad.data_mut();
    let god = grad_out.data();
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let base = idx4(input_shape, b, y, x, 0);
                for ch in 0..c {
                    gd[base + ch] = god[b * c + ch] * inv;
                }
            }
        }
    }
    grad
}
