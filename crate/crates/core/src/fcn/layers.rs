//! Layer kernels: forward and reverse passes on `[n, c, h, w]` tensors.

use super::Tensor;
use crate::error::{Error, Result};

/// Same-size cross-correlation with a square odd kernel and zero padding.
///
/// `weights` is laid out `[out][in][k][k]`, `bias` has `out` entries.
pub fn conv_forward(
    x: &Tensor,
    weights: &[f64],
    bias: &[f64],
    out_channels: usize,
    ksize: usize,
) -> Result<Tensor> {
    let [n, cin, h, w] = x.shape();
    if ksize % 2 == 0 || weights.len() != out_channels * cin * ksize * ksize || bias.len() != out_channels {
        return Err(Error::Dimension(format!(
            "convolution with {cin} input channels, {out_channels} outputs and {ksize}x{ksize} kernel got {} weights and {} biases",
            weights.len(),
            bias.len()
        )));
    }
    let r = ksize / 2;
    let mut out = Tensor::zeros([n, out_channels, h, w]);
    let plane = h * w;
    for b in 0..n {
        for o in 0..out_channels {
            let dst_off = (b * out_channels + o) * plane;
            let dst = &mut out.values_mut()[dst_off..dst_off + plane];
            dst.fill(bias[o]);
            for i in 0..cin {
                let src = &x.values()[(b * cin + i) * plane..][..plane];
                for ky in 0..ksize {
                    let (y0, y1) = valid_range(h, ky, r);
                    for kx in 0..ksize {
                        let wv = weights[((o * cin + i) * ksize + ky) * ksize + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(w, kx, r);
                        for y in y0..y1 {
                            let sy = y + ky - r;
                            let d = &mut dst[y * w + x0..y * w + x1];
                            let s = &src[sy * w + x0 + kx - r..sy * w + x1 + kx - r];
                            for (dv, sv) in d.iter_mut().zip(s) {
                                *dv += wv * sv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

// Output rows `y` for which `y + k - r` is inside `0..len`.
fn valid_range(len: usize, k: usize, r: usize) -> (usize, usize) {
    let lo = r.saturating_sub(k);
    let hi = (len + r).saturating_sub(k).min(len);
    (lo, hi.max(lo))
}

/// Gradients of [`conv_forward`] given the upstream gradient `dy`.
/// Returns `(dx, dweights, dbias)`.
pub fn conv_backward(
    x: &Tensor,
    weights: &[f64],
    dy: &Tensor,
    ksize: usize,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, cin, h, w] = x.shape();
    let cout = dy.channels();
    let r = ksize / 2;
    let plane = h * w;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; cout];
    for b in 0..n {
        for o in 0..cout {
            let g = &dy.values()[(b * cout + o) * plane..][..plane];
            db[o] += g.iter().sum::<f64>();
            for i in 0..cin {
                let src_off = (b * cin + i) * plane;
                for ky in 0..ksize {
                    let (y0, y1) = valid_range(h, ky, r);
                    for kx in 0..ksize {
                        let widx = ((o * cin + i) * ksize + ky) * ksize + kx;
                        let wv = weights[widx];
                        let (x0, x1) = valid_range(w, kx, r);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let sy = y + ky - r;
                            let gs = &g[y * w + x0..y * w + x1];
                            let s0 = src_off + sy * w + x0 + kx - r;
                            let xs = &x.values()[s0..s0 + (x1 - x0)];
                            for (gv, xv) in gs.iter().zip(xs) {
                                acc += gv * xv;
                            }
                            let ds = &mut dx.values_mut()[s0..s0 + (x1 - x0)];
                            for (dv, gv) in ds.iter_mut().zip(gs) {
                                *dv += wv * gv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `dy` where the forward input was positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let values = x.values().iter().zip(dy.values()).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    Tensor::from_vec(x.shape(), values).expect("same shape")
}

/// 2×2 max pooling with stride 2. The second value holds, for every output
/// element, the flat index of the selected input element.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("max pooling needs even extents, got {w}x{h}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0; n * c * oh * ow];
    for p in 0..n * c {
        let base = p * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x.values()[idx] > x.values()[best] {
                        best = idx;
                    }
                }
                let o = (p * oh + y) * ow + xo;
                out.values_mut()[o] = x.values()[best];
                argmax[o] = best;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward(input_shape: [usize; 4], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    for (&src, &g) in argmax.iter().zip(dy.values()) {
        dx.values_mut()[src] += g;
    }
    dx
}

/// Kernel extent and padding of a stride-`factor` transposed convolution
/// whose output is exactly `factor` times its input.
pub fn upconv_geometry(factor: usize) -> (usize, usize) {
    let k = 2 * factor - factor % 2;
    (k, (k - factor) / 2)
}

/// Bilinear interpolation weights for one `[k][k]` kernel plane.
pub fn bilinear_kernel(factor: usize) -> Vec<f64> {
    let (k, _) = upconv_geometry(factor);
    let f = factor as f64;
    let center = if k % 2 == 1 { f - 1.0 } else { f - 0.5 };
    let tap = |i: usize| 1.0 - (i as f64 - center).abs() / f;
    let mut out = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            out.push(tap(y) * tap(x));
        }
    }
    out
}

/// Transposed convolution with stride `factor`. `weights` is laid out
/// `[in][out][k][k]` with `k` from [`upconv_geometry`].
pub fn upconv_forward(
    x: &Tensor,
    weights: &[f64],
    bias: &[f64],
    out_channels: usize,
    factor: usize,
) -> Result<Tensor> {
    let [n, cin, h, w] = x.shape();
    let (k, pad) = upconv_geometry(factor);
    if factor == 0 || weights.len() != cin * out_channels * k * k || bias.len() != out_channels {
        return Err(Error::Dimension(format!(
            "upconvolution with {cin} inputs, {out_channels} outputs and factor {factor} got {} weights and {} biases",
            weights.len(),
            bias.len()
        )));
    }
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, out_channels, oh, ow]);
    let oplane = oh * ow;
    for b in 0..n {
        for o in 0..out_channels {
            out.values_mut()[(b * out_channels + o) * oplane..][..oplane].fill(bias[o]);
        }
        for i in 0..cin {
            for o in 0..out_channels {
                let kern = &weights[(i * out_channels + o) * k * k..][..k * k];
                let dst_off = (b * out_channels + o) * oplane;
                for y in 0..h {
                    for xi in 0..w {
                        let v = x.values()[((b * cin + i) * h + y) * w + xi];
                        if v == 0.0 {
                            continue;
                        }
                        for ky in 0..k {
                            let Some(oy) = (y * factor + ky).checked_sub(pad).filter(|&t| t < oh) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ox) = (xi * factor + kx).checked_sub(pad).filter(|&t| t < ow) else {
                                    continue;
                                };
                                out.values_mut()[dst_off + oy * ow + ox] += v * kern[ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`upconv_forward`]. Returns `(dx, dweights, dbias)`.
pub fn upconv_backward(x: &Tensor, weights: &[f64], dy: &Tensor, factor: usize) -> (Tensor, Vec<f64>, Vec<f64>) {
    let [n, cin, h, w] = x.shape();
    let cout = dy.channels();
    let (k, pad) = upconv_geometry(factor);
    let (oh, ow) = (h * factor, w * factor);
    let oplane = oh * ow;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = vec![0.0; weights.len()];
    let mut db = vec![0.0; cout];
    for b in 0..n {
        for o in 0..cout {
            db[o] += dy.values()[(b * cout + o) * oplane..][..oplane].iter().sum::<f64>();
        }
        for i in 0..cin {
            for o in 0..cout {
                let koff = (i * cout + o) * k * k;
                let g = &dy.values()[(b * cout + o) * oplane..][..oplane];
                for y in 0..h {
                    for xi in 0..w {
                        let xidx = ((b * cin + i) * h + y) * w + xi;
                        let v = x.values()[xidx];
                        let mut acc = 0.0;
                        for ky in 0..k {
                            let Some(oy) = (y * factor + ky).checked_sub(pad).filter(|&t| t < oh) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ox) = (xi * factor + kx).checked_sub(pad).filter(|&t| t < ow) else {
                                    continue;
                                };
                                let gv = g[oy * ow + ox];
                                acc += gv * weights[koff + ky * k + kx];
                                dw[koff + ky * k + kx] += gv * v;
                            }
                        }
                        dx.values_mut()[xidx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
