//! Same-padding 2-D cross-correlation, forward and backward, via an im2col
//! buffer and one GEMM per pass.
//!
//! Layouts: inputs `(h, w, c_in)` and kernels `(k, k, c_in, c_out)`, both
//! row-major, so a kernel flattens directly into the `(k²·c_in, c_out)`
//! GEMM operand. The im2col matrix is `(h·w, k²·c_in)` with patch offsets
//! ordered `(dr, dc, channel)`.

use crate::error::{Error, Result};
use crate::nn::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::nn::tensor::Tensor;

/// Fills `cols` (a `(h·w, k²·c_in)` matrix) with zero-padded input patches.
pub(crate) fn im2col(input: &[f64], h: usize, w: usize, c_in: usize, k: usize, cols: &mut [f64]) {
    let pad = k / 2;
    let row_len = k * k * c_in;
    debug_assert_eq!(input.len(), h * w * c_in);
    debug_assert_eq!(cols.len(), h * w * row_len);
    cols.fill(0.0);
    for r in 0..h {
        for dr in 0..k {
            let sr = r + dr;
            if sr < pad || sr >= h + pad {
                continue;
            }
            let sr = sr - pad;
            for dc in 0..k {
                // Valid output columns c where sc = c + dc - pad lies in [0, w).
                let c_start = pad.saturating_sub(dc);
                let c_end = (w + pad - dc).min(w);
                if c_start >= c_end {
                    continue;
                }
                let off = (dr * k + dc) * c_in;
                for c in c_start..c_end {
                    let sc = c + dc - pad;
                    let src = (sr * w + sc) * c_in;
                    let dst = (r * w + c) * row_len + off;
                    cols[dst..dst + c_in].copy_from_slice(&input[src..src + c_in]);
                }
            }
        }
    }
}

/// Reverse of [`im2col`]: scatter-adds patch-space gradients back onto the
/// input gradient.
pub(crate) fn col2im_add(cols: &[f64], h: usize, w: usize, c_in: usize, k: usize, grad_input: &mut [f64]) {
    let pad = k / 2;
    let row_len = k * k * c_in;
    debug_assert_eq!(grad_input.len(), h * w * c_in);
    debug_assert_eq!(cols.len(), h * w * row_len);
    for r in 0..h {
        for dr in 0..k {
            let sr = r + dr;
            if sr < pad || sr >= h + pad {
                continue;
            }
            let sr = sr - pad;
            for dc in 0..k {
                let c_start = pad.saturating_sub(dc);
                let c_end = (w + pad - dc).min(w);
                if c_start >= c_end {
                    continue;
                }
                let off = (dr * k + dc) * c_in;
                for c in c_start..c_end {
                    let sc = c + dc - pad;
                    let dst = (sr * w + sc) * c_in;
                    let src = (r * w + c) * row_len + off;
                    for ch in 0..c_in {
                        grad_input[dst + ch] += cols[src + ch];
                    }
                }
            }
        }
    }
}

pub(crate) fn check_conv_shapes(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize, usize, usize)> {
    let (ishape, kshape) = (input.shape(), kernel.shape());
    if ishape.len() != 3 || kshape.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d expects input (h, w, c_in) and kernel (k, k, c_in, c_out), got {ishape:?} and {kshape:?}"
        )));
    }
    let (h, w, c_in) = (ishape[0], ishape[1], ishape[2]);
    let (k, k2, kc_in, c_out) = (kshape[0], kshape[1], kshape[2], kshape[3]);
    if k != k2 || k % 2 == 0 {
        return Err(Error::ShapeMismatch(format!("kernel must be square with odd size, got {k}x{k2}")));
    }
    if kc_in != c_in {
        return Err(Error::ShapeMismatch(format!(
            "kernel expects {kc_in} input channels, input has {c_in}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::ShapeMismatch(format!(
                "bias shape {:?} does not match {c_out} output channels",
                b.shape()
            )));
        }
    }
    Ok((h, w, c_in, k, c_out))
}

/// Same-padding cross-correlation with zero boundary:
/// `out[r][c][o] = bias[o] + Σ_{dr,dc,i} in[r+dr−⌊k/2⌋][c+dc−⌊k/2⌋][i] · ker[dr][dc][i][o]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (h, w, c_in, k, c_out) = check_conv_shapes(input, kernel, Some(bias))?;
    let row_len = k * k * c_in;
    let mut cols = vec![0.0; h * w * row_len];
    im2col(input.data(), h, w, c_in, k, &mut cols);
    let mut out = Tensor::zeros(&[h, w, c_out]);
    gemm_nn(h * w, row_len, c_out, &cols, kernel.data(), 0.0, out.data_mut());
    let data = out.data_mut();
    for p in 0..h * w {
        for (o, &b) in bias.data().iter().enumerate() {
            data[p * c_out + o] += b;
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, kernel, and bias, given
/// the upstream gradient `(h, w, c_out)`.
pub fn conv2d_backward(input: &Tensor, kernel: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (h, w, c_in, k, c_out) = check_conv_shapes(input, kernel, None)?;
    if grad_out.shape() != [h, w, c_out] {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient shape {:?}, expected [{h}, {w}, {c_out}]",
            grad_out.shape()
        )));
    }
    let row_len = k * k * c_in;
    let mut cols = vec![0.0; h * w * row_len];
    im2col(input.data(), h, w, c_in, k, &mut cols);

    let mut grad_bias = Tensor::zeros(&[c_out]);
    let gb = grad_bias.data_mut();
    for row in grad_out.data().chunks_exact(c_out) {
        for (acc, &g) in gb.iter_mut().zip(row) {
            *acc += g;
        }
    }

    let mut grad_kernel = Tensor::zeros(kernel.shape());
    gemm_tn(row_len, h * w, c_out, &cols, grad_out.data(), 0.0, grad_kernel.data_mut());

    let mut grad_cols = vec![0.0; h * w * row_len];
    gemm_nt(h * w, c_out, row_len, grad_out.data(), kernel.data(), 0.0, &mut grad_cols);
    let mut grad_input = Tensor::zeros(input.shape());
    col2im_add(&grad_cols, h, w, c_in, k, grad_input.data_mut());

    Ok((grad_input, grad_kernel, grad_bias))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-loop reference, written independently of the GEMM path.
    fn conv2d_naive(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
        let (h, w, c_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (k, c_out) = (kernel.shape()[0], kernel.shape()[3]);
        let pad = (k / 2) as isize;
        let mut out = Tensor::zeros(&[h, w, c_out]);
        for r in 0..h {
            for c in 0..w {
                for o in 0..c_out {
                    let mut acc = bias.at(&[o]);
                    for dr in 0..k {
                        for dc in 0..k {
                            let sr = r as isize + dr as isize - pad;
                            let sc = c as isize + dc as isize - pad;
                            if sr < 0 || sc < 0 || sr >= h as isize || sc >= w as isize {
                                continue;
                            }
                            for i in 0..c_in {
                                acc += input.at(&[sr as usize, sc as usize, i])
                                    * kernel.at(&[dr, dc, i, o]);
                            }
                        }
                    }
                    out.set(&[r, c, o], acc);
                }
            }
        }
        out
    }

    fn pseudo(shape: &[usize], salt: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(salt);
                (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let input = pseudo(&[4, 5, 3], 1);
        // 1x1 kernel = identity over channels, zero bias.
        let mut kernel = Tensor::zeros(&[1, 1, 3, 3]);
        for ch in 0..3 {
            kernel.set(&[0, 0, ch, ch], 1.0);
        }
        let bias = Tensor::zeros(&[3]);
        let out = conv2d(&input, &kernel, &bias).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn zero_kernel_yields_constant_bias() {
        let input = pseudo(&[3, 3, 2], 2);
        let kernel = Tensor::zeros(&[3, 3, 2, 4]);
        let bias = Tensor::from_vec(&[4], vec![0.5, -1.0, 0.0, 2.0]).unwrap();
        let out = conv2d(&input, &kernel, &bias).unwrap();
        for p in 0..9 {
            for o in 0..4 {
                assert_eq!(out.data()[p * 4 + o], bias.data()[o]);
            }
        }
    }

    #[test]
    fn gemm_path_matches_naive_loops() {
        let input = pseudo(&[5, 5, 2], 3);
        let kernel = pseudo(&[3, 3, 2, 4], 4);
        let bias = pseudo(&[4], 5);
        let fast = conv2d(&input, &kernel, &bias).unwrap();
        let slow = conv2d_naive(&input, &kernel, &bias);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn bias_gradient_is_per_channel_pixel_count() {
        // d/db of sum(conv2d(x, K, b)) is the pixel count for each channel.
        let input = pseudo(&[4, 6, 2], 6);
        let kernel = pseudo(&[3, 3, 2, 3], 7);
        let grad_out = Tensor::filled(&[4, 6, 3], 1.0);
        let (_, _, gb) = conv2d_backward(&input, &kernel, &grad_out).unwrap();
        for o in 0..3 {
            assert_eq!(gb.at(&[o]), 24.0);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let input = pseudo(&[4, 4, 2], 8);
        let kernel = pseudo(&[3, 3, 2, 2], 9);
        let bias = pseudo(&[2], 10);
        // Loss = weighted sum of outputs, weights fixed.
        let weights = pseudo(&[4, 4, 2], 11);
        let loss = |inp: &Tensor, ker: &Tensor, b: &Tensor| -> f64 {
            conv2d(inp, ker, b)
                .unwrap()
                .data()
                .iter()
                .zip(weights.data())
                .map(|(y, w)| y * w)
                .sum()
        };
        let grad_out = weights.clone();
        let (gi, gk, gb) = conv2d_backward(&input, &kernel, &grad_out).unwrap();

        let h = 1e-6;
        let check = |analytic: &Tensor, base: &Tensor, which: usize| {
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus.data_mut()[i] += h;
                let mut minus = base.clone();
                minus.data_mut()[i] -= h;
                let fd = match which {
                    0 => (loss(&plus, &kernel, &bias) - loss(&minus, &kernel, &bias)) / (2.0 * h),
                    1 => (loss(&input, &plus, &bias) - loss(&input, &minus, &bias)) / (2.0 * h),
                    _ => (loss(&input, &kernel, &plus) - loss(&input, &kernel, &minus)) / (2.0 * h),
                };
                let a = analytic.data()[i];
                assert!(
                    (a - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "which={which} i={i}: analytic {a} vs fd {fd}"
                );
            }
        };
        check(&gi, &input, 0);
        check(&gk, &kernel, 1);
        check(&gb, &bias, 2);
    }

    #[test]
    fn shape_errors_are_reported() {
        let input = pseudo(&[3, 3, 2], 12);
        let bad_kernel = pseudo(&[2, 2, 2, 2], 13); // even size
        let bias = Tensor::zeros(&[2]);
        assert!(conv2d(&input, &bad_kernel, &bias).is_err());
        let wrong_ch = pseudo(&[3, 3, 5, 2], 14);
        assert!(conv2d(&input, &wrong_ch, &bias).is_err());
    }
}
