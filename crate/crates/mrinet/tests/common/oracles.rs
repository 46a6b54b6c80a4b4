//! Naive loop references written directly from the operation definitions.
//! These are the independent oracle route: explicit nested loops, no code
//! shared with the optimized kernels.

#![allow(dead_code)]

use mrinet::Tensor;

/// Output size and leading pad under the spec rule, written out longhand.
pub fn pad_plan(in_dim: usize, k: usize, stride: usize, same: bool) -> (usize, usize) {
    if same {
        let out = (in_dim + stride - 1) / stride;
        let needed = (out - 1) * stride + k;
        let total = needed.saturating_sub(in_dim);
        (out, total / 2)
    } else {
        ((in_dim - k) / stride + 1, 0)
    }
}

/// Six-nested-loop dense convolution (cross-correlation plus bias).
pub fn conv2d_oracle(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    stride: usize,
    same: bool,
) -> Tensor<f64> {
    let is = input.shape();
    let (n, h, w, cin) = (is[0], is[1], is[2], is[3]);
    let ws = weights.shape();
    let (kh, kw, cout) = (ws[0], ws[1], ws[3]);
    let (oh, pt) = pad_plan(h, kh, stride, same);
    let (ow, pl) = pad_plan(w, kw, stride, same);
    let mut out = Tensor::zeros(&[n, oh, ow, cout]);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for oc in 0..cout {
                    let mut acc = 0.0;
                    for ic in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pt as isize;
                                let ix = (ox * stride + kx) as isize - pl as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xv = input.data()
                                    [((b * h + iy as usize) * w + ix as usize) * cin + ic];
                                let wv = weights.data()[((ky * kw + kx) * cin + ic) * cout + oc];
                                acc += xv * wv;
                            }
                        }
                    }
                    if let Some(bt) = bias {
                        acc += bt.data()[oc];
                    }
                    out.data_mut()[((b * oh + oy) * ow + ox) * cout + oc] = acc;
                }
            }
        }
    }
    out
}

/// Per-channel loop reference for depthwise convolution.
pub fn depthwise_oracle(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    bias: Option<&Tensor<f64>>,
    stride: usize,
    same: bool,
) -> Tensor<f64> {
    let is = input.shape();
    let (n, h, w, c) = (is[0], is[1], is[2], is[3]);
    let (kh, kw) = (weights.shape()[0], weights.shape()[1]);
    let (oh, pt) = pad_plan(h, kh, stride, same);
    let (ow, pl) = pad_plan(w, kw, stride, same);
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += input.data()[((b * h + iy as usize) * w + ix as usize) * c + ch]
                                * weights.data()[(ky * kw + kx) * c + ch];
                        }
                    }
                    if let Some(bt) = bias {
                        acc += bt.data()[ch];
                    }
                    out.data_mut()[((b * oh + oy) * ow + ox) * c + ch] = acc;
                }
            }
        }
    }
    out
}

/// Window-scan reference for max pooling (clipped windows for same padding).
pub fn max_pool_oracle(
    input: &Tensor<f64>,
    window: (usize, usize),
    stride: usize,
    same: bool,
) -> Tensor<f64> {
    let is = input.shape();
    let (n, h, w, c) = (is[0], is[1], is[2], is[3]);
    let (kh, kw) = window;
    let (oh, pt) = pad_plan(h, kh, stride, same);
    let (ow, pl) = pad_plan(w, kw, stride, same);
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let v =
                                input.data()[((b * h + iy as usize) * w + ix as usize) * c + ch];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    out.data_mut()[((b * oh + oy) * ow + ox) * c + ch] = best;
                }
            }
        }
    }
    out
}

/// Double-loop mean reference for global average pooling.
pub fn gap_oracle(input: &Tensor<f64>) -> Tensor<f64> {
    let is = input.shape();
    let (n, h, w, c) = (is[0], is[1], is[2], is[3]);
    let mut out = Tensor::zeros(&[n, c]);
    for b in 0..n {
        for ch in 0..c {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += input.data()[((b * h + y) * w + x) * c + ch];
                }
            }
            out.data_mut()[b * c + ch] = acc / (h * w) as f64;
        }
    }
    out
}

/// Triple-loop matrix product reference for the affine layer.
pub fn dense_oracle(input: &Tensor<f64>, weights: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
    let (n, d) = (input.shape()[0], input.shape()[1]);
    let u = weights.shape()[1];
    let mut out = Tensor::zeros(&[n, u]);
    for i in 0..n {
        for j in 0..u {
            let mut acc = bias.data()[j];
            for k in 0..d {
                acc += input.data()[i * d + k] * weights.data()[k * u + j];
            }
            out.data_mut()[i * u + j] = acc;
        }
    }
    out
}

