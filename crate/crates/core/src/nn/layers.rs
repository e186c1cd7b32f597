//! Pointwise layers and normalizations with explicit forward caches and
//! hand-written backward passes.
//!
//! Normalizations treat a tensor as `(positions, channels)` where channels
//! is the last axis: layer norm normalizes each position across channels,
//! batch norm normalizes each channel across positions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Backward through relu given its *output* (the mask `output > 0` equals
/// `input > 0` except at exactly zero, where the gradient is zero anyway).
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(output.shape(), grad_out.shape());
    let mut grad = grad_out.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    out
}

/// Backward through sigmoid given its *output*.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(output.shape(), grad_out.shape());
    let mut grad = grad_out.clone();
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        *g *= y * (1.0 - y);
    }
    grad
}

fn positions_and_channels(x: &Tensor) -> (usize, usize) {
    let shape = x.shape();
    let ch = *shape.last().expect("normalized tensor needs at least one axis");
    (x.len() / ch, ch)
}

/// Layer normalization over the channel axis with per-channel scale/shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let (pos, ch) = positions_and_channels(x);
        debug_assert_eq!(ch, self.channels());
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![0.0; pos];
        let (xd, od, hd) = (x.data(), out.data_mut(), xhat.data_mut());
        let (g, b) = (self.gamma.data(), self.beta.data());
        for p in 0..pos {
            let row = &xd[p * ch..(p + 1) * ch];
            let mean = row.iter().sum::<f64>() / ch as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ch as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[p] = is;
            for i in 0..ch {
                let h = (row[i] - mean) * is;
                hd[p * ch + i] = h;
                od[p * ch + i] = g[i] * h + b[i];
            }
        }
        (out, LayerNormCache { xhat, inv_std })
    }

    /// Returns `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(&self, cache: &LayerNormCache, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
        let (pos, ch) = positions_and_channels(grad_out);
        let mut grad_x = Tensor::zeros(grad_out.shape());
        let mut grad_gamma = Tensor::zeros(&[ch]);
        let mut grad_beta = Tensor::zeros(&[ch]);
        let (gd, hd) = (grad_out.data(), cache.xhat.data());
        let g = self.gamma.data();
        let (gx, gg, gb) = (grad_x.data_mut(), grad_gamma.data_mut(), grad_beta.data_mut());
        for p in 0..pos {
            let base = p * ch;
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for i in 0..ch {
                let dxhat = gd[base + i] * g[i];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * hd[base + i];
                gg[i] += gd[base + i] * hd[base + i];
                gb[i] += gd[base + i];
            }
            mean_dxhat /= ch as f64;
            mean_dxhat_xhat /= ch as f64;
            let is = cache.inv_std[p];
            for i in 0..ch {
                let dxhat = gd[base + i] * g[i];
                gx[base + i] = is * (dxhat - mean_dxhat - hd[base + i] * mean_dxhat_xhat);
            }
        }
        (grad_x, grad_gamma, grad_beta)
    }
}

/// Batch normalization over positions per channel. Scale/shift are
/// trainable; the running mean/variance pair is the layer's non-trainable
/// state, updated only by training-mode forwards (exponential moving
/// average, momentum 0.9, biased batch variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Number of training-mode forwards that updated the running stats.
    pub steps: u64,
}

pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    positions: usize,
}

pub const BN_MOMENTUM: f64 = 0.9;

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            steps: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BatchNormCache) {
        let (pos, ch) = positions_and_channels(x);
        debug_assert_eq!(ch, self.channels());
        let xd = x.data();
        let mut mean = vec![0.0; ch];
        let mut var = vec![0.0; ch];
        for p in 0..pos {
            for i in 0..ch {
                mean[i] += xd[p * ch + i];
            }
        }
        for m in &mut mean {
            *m /= pos as f64;
        }
        for p in 0..pos {
            for i in 0..ch {
                let d = xd[p * ch + i] - mean[i];
                var[i] += d * d;
            }
        }
        for v in &mut var {
            *v /= pos as f64;
        }

        for i in 0..ch {
            self.running_mean[i] = BN_MOMENTUM * self.running_mean[i] + (1.0 - BN_MOMENTUM) * mean[i];
            self.running_var[i] = BN_MOMENTUM * self.running_var[i] + (1.0 - BN_MOMENTUM) * var[i];
        }
        self.steps += 1;

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let (od, hd) = (out.data_mut(), xhat.data_mut());
        let (g, b) = (self.gamma.data(), self.beta.data());
        for p in 0..pos {
            for i in 0..ch {
                let h = (xd[p * ch + i] - mean[i]) * inv_std[i];
                hd[p * ch + i] = h;
                od[p * ch + i] = g[i] * h + b[i];
            }
        }
        (out, BatchNormCache { xhat, inv_std, positions: pos })
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        if self.steps == 0 {
            return Err(Error::UninitializedRunningStats);
        }
        let (pos, ch) = positions_and_channels(x);
        debug_assert_eq!(ch, self.channels());
        let mut out = Tensor::zeros(x.shape());
        let (xd, od) = (x.data(), out.data_mut());
        let (g, b) = (self.gamma.data(), self.beta.data());
        let inv_std: Vec<f64> = self.running_var.iter().map(|&v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        for p in 0..pos {
            for i in 0..ch {
                od[p * ch + i] = g[i] * (xd[p * ch + i] - self.running_mean[i]) * inv_std[i] + b[i];
            }
        }
        Ok(out)
    }

    /// Backward through a training-mode forward (batch statistics are part
    /// of the graph). Returns `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
        let (pos, ch) = positions_and_channels(grad_out);
        debug_assert_eq!(pos, cache.positions);
        let (gd, hd) = (grad_out.data(), cache.xhat.data());
        let g = self.gamma.data();
        let mut sum_dy = vec![0.0; ch];
        let mut sum_dy_xhat = vec![0.0; ch];
        for p in 0..pos {
            for i in 0..ch {
                sum_dy[i] += gd[p * ch + i];
                sum_dy_xhat[i] += gd[p * ch + i] * hd[p * ch + i];
            }
        }
        let mut grad_x = Tensor::zeros(grad_out.shape());
        let gx = grad_x.data_mut();
        let n = pos as f64;
        for p in 0..pos {
            for i in 0..ch {
                let dy = gd[p * ch + i];
                gx[p * ch + i] = g[i] * cache.inv_std[i] / n
                    * (n * dy - sum_dy[i] - hd[p * ch + i] * sum_dy_xhat[i]);
            }
        }
        let grad_gamma = Tensor::from_vec(&[ch], sum_dy_xhat).unwrap();
        let grad_beta = Tensor::from_vec(&[ch], sum_dy).unwrap();
        (grad_x, grad_gamma, grad_beta)
    }
}

/// Inverted-dropout mask: each element is `0` with probability `p`, else
/// `1/(1−p)`, so evaluation needs no rescaling. Applying the same mask in
/// forward and backward is the whole layer.
pub fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&p));
    let keep_scale = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < p {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}

pub fn apply_mask(x: &Tensor, mask: &[f64]) -> Tensor {
    debug_assert_eq!(x.len(), mask.len());
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pseudo(shape: &[usize], salt: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as u64).wrapping_mul(2862933555777941757).wrapping_add(salt);
                (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn layernorm_output_is_normalized_per_position() {
        let x = pseudo(&[7, 5], 1);
        let ln = LayerNorm::new(5);
        let (y, _) = ln.forward(&x);
        for p in 0..7 {
            let row = &y.data()[p * 5..(p + 1) * 5];
            let mean: f64 = row.iter().sum::<f64>() / 5.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3); // eps shrinks variance slightly
        }
    }

    #[test]
    fn batchnorm_eval_before_any_training_step_errors() {
        let bn = BatchNorm::new(3);
        let x = pseudo(&[4, 3], 2);
        assert!(matches!(bn.forward_eval(&x), Err(Error::UninitializedRunningStats)));
    }

    #[test]
    fn batchnorm_running_stats_move_toward_batch_stats() {
        let mut bn = BatchNorm::new(2);
        let x = Tensor::from_vec(&[4, 2], vec![1.0, 10.0, 1.0, 10.0, 3.0, 14.0, 3.0, 14.0]).unwrap();
        let (_, _) = bn.forward_train(&x);
        assert_eq!(bn.steps, 1);
        // batch means are (2, 12); running = 0.9*0 + 0.1*batch
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_mean[1] - 1.2).abs() < 1e-12);
        assert!(bn.forward_eval(&x).is_ok());
    }

    #[test]
    fn dropout_mask_is_seeded_and_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m1 = dropout_mask(1000, 0.25, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m2 = dropout_mask(1000, 0.25, &mut rng);
        assert_eq!(m1, m2);
        let kept = m1.iter().filter(|&&v| v > 0.0).count();
        assert!((600..900).contains(&kept));
        for &v in &m1 {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12);
        }
    }

    /// Shared finite-difference scalar check used by the norm layers below:
    /// loss = Σ w ⊙ layer(x).
    fn fd_check(
        forward: &dyn Fn(&Tensor) -> Tensor,
        analytic_grad_x: &Tensor,
        x: &Tensor,
        weights: &Tensor,
    ) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let lp: f64 = forward(&plus).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
            let lm: f64 = forward(&minus).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
            let fd = (lp - lm) / (2.0 * h);
            let a = analytic_grad_x.data()[i];
            assert!((a - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "i={i}: {a} vs {fd}");
        }
    }

    #[test]
    fn layernorm_backward_matches_finite_differences() {
        let x = pseudo(&[6, 4], 3);
        let w = pseudo(&[6, 4], 4);
        let mut ln = LayerNorm::new(4);
        ln.gamma = pseudo(&[4], 5);
        ln.beta = pseudo(&[4], 6);
        let (_, cache) = ln.forward(&x);
        let (gx, _, _) = ln.backward(&cache, &w);
        fd_check(&|t| ln.forward(t).0, &gx, &x, &w);
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let x = pseudo(&[8, 3], 7);
        let w = pseudo(&[8, 3], 8);
        let mut bn = BatchNorm::new(3);
        bn.gamma = pseudo(&[3], 9);
        bn.beta = pseudo(&[3], 10);
        let (_, cache) = bn.clone().forward_train(&x);
        let (gx, _, _) = bn.backward(&cache, &w);
        fd_check(&|t| bn.clone().forward_train(t).0, &gx, &x, &w);
    }
}
