//! The CIPS segmentation network (ConvLSTM for InSAR pixel selection) and
//! its hand-written backward pass.
//!
//! Layer stack, applied to a `(n_s, n_t, h, w, f)` batch:
//!
//! ```text
//! convlstm₁ (f → hidden, all steps) → layer norm (channels) → relu
//! → convlstm₂ (hidden → hidden, final step only) → batch norm → relu
//! → [conv + batch norm + relu] × 2 → dropout (training only)
//! → per-pixel dense (1×1 conv, hidden → 1) → sigmoid
//! ```
//!
//! The network is fully convolutional: any `h × w` works, the 100×100 patch
//! size is a data-pipeline choice. The recurrent trunk runs per sample (in
//! parallel, results reduced in sample order), the head runs on the whole
//! batch so batch-norm statistics see every sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::conv::{conv2d, conv2d_backward};
use crate::nn::convlstm::{
    convlstm_backward, convlstm_forward, convlstm_forward_cached, ConvLstmCache, ConvLstmParams,
};
use crate::nn::layers::{
    apply_mask, dropout_mask, relu, relu_backward, sigmoid, sigmoid_backward, BatchNorm,
    BatchNormCache, LayerNorm, LayerNormCache,
};
use crate::nn::tensor::Tensor;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CipsConfig {
    /// Input feature planes per epoch.
    pub features: usize,
    /// Convolution kernel size for every layer (odd).
    pub kernel_size: usize,
    /// Filter count of the recurrent and conv layers.
    pub hidden: usize,
    /// Dropout ratio before the dense head (training mode only).
    pub dropout: f64,
}

impl Default for CipsConfig {
    fn default() -> Self {
        Self {
            features: 2,
            kernel_size: 3,
            hidden: 16,
            dropout: 0.25,
        }
    }
}

impl CipsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("features and hidden must be nonzero".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout ratio must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Kernel and bias of a plain convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CipsModel {
    pub config: CipsConfig,
    pub lstm1: ConvLstmParams,
    pub norm1: LayerNorm,
    pub lstm2: ConvLstmParams,
    pub bn1: BatchNorm,
    pub conv1: Conv2dParams,
    pub bn2: BatchNorm,
    pub conv2: Conv2dParams,
    pub bn3: BatchNorm,
    pub head: Conv2dParams,
}

/// Closed-form parameter counts for a configuration:
/// `(trainable, non_trainable)`.
///
/// Per layer: a ConvLSTM holds `4·(k²·(c_in+c_h)·c_h + c_h)` trainables, a
/// conv `k²·c_in·c_out + c_out`, each norm layer `2·channels` trainables,
/// and each batch norm an additional `2·channels` non-trainable running
/// statistics. The dense head is `c_h + 1`.
pub fn param_count(config: &CipsConfig) -> (usize, usize) {
    let (f, k, h) = (config.features, config.kernel_size, config.hidden);
    let convlstm = |c_in: usize| 4 * (k * k * (c_in + h) * h + h);
    let conv = k * k * h * h + h;
    let norm = 2 * h;
    let trainable = convlstm(f) + norm       // convlstm1 + layernorm
        + convlstm(h) + norm                 // convlstm2 + batchnorm1
        + conv + norm                        // conv1 + batchnorm2
        + conv + norm                        // conv2 + batchnorm3
        + (h + 1);                           // dense head
    let non_trainable = 3 * 2 * h;
    (trainable, non_trainable)
}

/// Glorot-uniform draw: values uniform in `±√(6/(fan_in+fan_out))`.
fn glorot_fill(kernel: &mut Tensor, rng: &mut ChaCha8Rng) {
    let shape = kernel.shape();
    let k2 = shape[0] * shape[1];
    let bound = (6.0 / (k2 * shape[2] + k2 * shape[3]) as f64).sqrt();
    for v in kernel.data_mut() {
        let u: f64 = rng.gen();
        *v = (2.0 * u - 1.0) * bound;
    }
}

/// Builds a model with Glorot-uniform kernels and zero biases, except the
/// forget-gate biases which start at 1.0. Deterministic per seed; kernels
/// are drawn in trainable-parameter order.
pub fn init_params(config: &CipsConfig, seed: u64) -> Result<CipsModel> {
    config.validate()?;
    let (f, k, h) = (config.features, config.kernel_size, config.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let lstm_layer = |c_in: usize, rng: &mut ChaCha8Rng| {
        let mut p = ConvLstmParams::zeros(k, c_in, h);
        for w in [&mut p.w_fg, &mut p.w_in, &mut p.w_s, &mut p.w_out] {
            glorot_fill(w, rng);
        }
        p.b_fg = Tensor::filled(&[h], 1.0);
        p
    };
    let lstm1 = lstm_layer(f, &mut rng);
    let lstm2 = lstm_layer(h, &mut rng);

    let conv_layer = |c_in: usize, c_out: usize, rng: &mut ChaCha8Rng, kk: usize| {
        let mut kernel = Tensor::zeros(&[kk, kk, c_in, c_out]);
        glorot_fill(&mut kernel, rng);
        Conv2dParams {
            kernel,
            bias: Tensor::zeros(&[c_out]),
        }
    };
    let conv1 = conv_layer(h, h, &mut rng, k);
    let conv2 = conv_layer(h, h, &mut rng, k);
    let head = conv_layer(h, 1, &mut rng, 1);

    Ok(CipsModel {
        config: *config,
        lstm1,
        norm1: LayerNorm::new(h),
        lstm2,
        bn1: BatchNorm::new(h),
        conv1,
        bn2: BatchNorm::new(h),
        conv2,
        bn3: BatchNorm::new(h),
        head,
    })
}

/// Gradients for every trainable tensor, aligned with
/// [`CipsModel::trainable_names`] order.
#[derive(Debug, Clone)]
pub struct CipsGradients {
    pub tensors: Vec<Tensor>,
}

pub const TRAINABLE_COUNT: usize = 30;

impl CipsModel {
    pub fn trainable_names() -> [&'static str; TRAINABLE_COUNT] {
        [
            "lstm1.w_fg",
            "lstm1.b_fg",
            "lstm1.w_in",
            "lstm1.b_in",
            "lstm1.w_s",
            "lstm1.b_s",
            "lstm1.w_out",
            "lstm1.b_out",
            "norm1.gamma",
            "norm1.beta",
            "lstm2.w_fg",
            "lstm2.b_fg",
            "lstm2.w_in",
            "lstm2.b_in",
            "lstm2.w_s",
            "lstm2.b_s",
            "lstm2.w_out",
            "lstm2.b_out",
            "bn1.gamma",
            "bn1.beta",
            "conv1.kernel",
            "conv1.bias",
            "bn2.gamma",
            "bn2.beta",
            "conv2.kernel",
            "conv2.bias",
            "bn3.gamma",
            "bn3.beta",
            "head.kernel",
            "head.bias",
        ]
    }

    pub fn trainables(&self) -> Vec<&Tensor> {
        vec![
            &self.lstm1.w_fg,
            &self.lstm1.b_fg,
            &self.lstm1.w_in,
            &self.lstm1.b_in,
            &self.lstm1.w_s,
            &self.lstm1.b_s,
            &self.lstm1.w_out,
            &self.lstm1.b_out,
            &self.norm1.gamma,
            &self.norm1.beta,
            &self.lstm2.w_fg,
            &self.lstm2.b_fg,
            &self.lstm2.w_in,
            &self.lstm2.b_in,
            &self.lstm2.w_s,
            &self.lstm2.b_s,
            &self.lstm2.w_out,
            &self.lstm2.b_out,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv1.kernel,
            &self.conv1.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.conv2.kernel,
            &self.conv2.bias,
            &self.bn3.gamma,
            &self.bn3.beta,
            &self.head.kernel,
            &self.head.bias,
        ]
    }

    pub fn trainables_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.lstm1.w_fg,
            &mut self.lstm1.b_fg,
            &mut self.lstm1.w_in,
            &mut self.lstm1.b_in,
            &mut self.lstm1.w_s,
            &mut self.lstm1.b_s,
            &mut self.lstm1.w_out,
            &mut self.lstm1.b_out,
            &mut self.norm1.gamma,
            &mut self.norm1.beta,
            &mut self.lstm2.w_fg,
            &mut self.lstm2.b_fg,
            &mut self.lstm2.w_in,
            &mut self.lstm2.b_in,
            &mut self.lstm2.w_s,
            &mut self.lstm2.b_s,
            &mut self.lstm2.w_out,
            &mut self.lstm2.b_out,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv1.kernel,
            &mut self.conv1.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.conv2.kernel,
            &mut self.conv2.bias,
            &mut self.bn3.gamma,
            &mut self.bn3.beta,
            &mut self.head.kernel,
            &mut self.head.bias,
        ]
    }

    fn check_batch(&self, inputs: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let shape = inputs.shape();
        if shape.len() != 5 {
            return Err(Error::ShapeMismatch(format!(
                "batch must be (n_s, n_t, h, w, f), got {shape:?}"
            )));
        }
        if shape[4] != self.config.features {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} feature planes, model expects {}",
                shape[4], self.config.features
            )));
        }
        if shape[0] == 0 || shape[1] == 0 {
            return Err(Error::ShapeMismatch("batch needs at least one sample and one step".into()));
        }
        Ok((shape[0], shape[1], shape[2], shape[3]))
    }

    fn sample_seq(&self, inputs: &Tensor, s: usize) -> Tensor {
        let shape = inputs.shape();
        let step = shape[1] * shape[2] * shape[3] * shape[4];
        Tensor::from_vec(&[shape[1], shape[2], shape[3], shape[4]], inputs.data()[s * step..(s + 1) * step].to_vec())
            .unwrap()
    }

    /// Recurrent trunk for one sample, no caches. Returns `(h, w, hidden)`.
    fn trunk_forward(&self, seq: &Tensor) -> Result<Tensor> {
        let h1 = convlstm_forward(seq, &self.lstm1, true)?;
        let (normed, _) = self.norm1.forward(&h1);
        let r1 = relu(&normed);
        convlstm_forward(&r1, &self.lstm2, false)
    }

    fn trunk_forward_cached(&self, seq: Tensor) -> Result<(Tensor, TrunkCache)> {
        let lstm1 = convlstm_forward_cached(&seq, &self.lstm1)?;
        let hiddens1 = lstm1.hiddens_tensor();
        let (normed, ln_cache) = self.norm1.forward(&hiddens1);
        let relu1 = relu(&normed);
        let lstm2 = convlstm_forward_cached(&relu1, &self.lstm2)?;
        let out = lstm2.hiddens.last().unwrap().clone();
        Ok((
            out,
            TrunkCache {
                seq,
                lstm1,
                ln_cache,
                relu1,
                lstm2,
            },
        ))
    }

    fn trunk_backward(&self, cache: &TrunkCache, grad_out: &Tensor) -> Result<TrunkGrads> {
        let n_t = cache.lstm2.hiddens.len();
        let hw_ch = grad_out.len();
        let shape = grad_out.shape();
        let mut grad_h2 = Tensor::zeros(&[n_t, shape[0], shape[1], shape[2]]);
        grad_h2.data_mut()[(n_t - 1) * hw_ch..].copy_from_slice(grad_out.data());
        let (lstm2_grads, d_relu1) = convlstm_backward(&cache.relu1, &self.lstm2, &cache.lstm2, &grad_h2)?;
        let d_normed = relu_backward(&cache.relu1, &d_relu1);
        let (d_h1, g_gamma, g_beta) = self.norm1.backward(&cache.ln_cache, &d_normed);
        let (lstm1_grads, _) = convlstm_backward(&cache.seq, &self.lstm1, &cache.lstm1, &d_h1)?;
        Ok(TrunkGrads {
            lstm1: lstm1_grads,
            norm1_gamma: g_gamma,
            norm1_beta: g_beta,
            lstm2: lstm2_grads,
        })
    }

    /// Inference forward: running batch-norm statistics, no dropout. Errors
    /// if the model has never seen a training step.
    pub fn forward_eval(&self, inputs: &Tensor) -> Result<Tensor> {
        let (n_s, _, h, w) = self.check_batch(inputs)?;
        let ch = self.config.hidden;
        let trunk_outs: Vec<Tensor> = (0..n_s)
            .into_par_iter()
            .map(|s| self.trunk_forward(&self.sample_seq(inputs, s)))
            .collect::<Result<Vec<_>>>()?;
        let mut batch = Tensor::zeros(&[n_s, h, w, ch]);
        for (s, out) in trunk_outs.iter().enumerate() {
            batch.data_mut()[s * out.len()..(s + 1) * out.len()].copy_from_slice(out.data());
        }

        let x = relu(&self.bn1.forward_eval(&batch)?);
        let x = self.conv_batch(&x, &self.conv1)?;
        let x = relu(&self.bn2.forward_eval(&x)?);
        let x = self.conv_batch(&x, &self.conv2)?;
        let x = relu(&self.bn3.forward_eval(&x)?);
        let logits = self.conv_batch(&x, &self.head)?;
        Ok(sigmoid(&logits))
    }

    /// Training forward: batch statistics, running-stat update, dropout from
    /// the supplied stream. Returns predictions and the trace that
    /// [`CipsModel::backward`] consumes; gradients cannot be requested
    /// without the trace of a recorded forward.
    pub fn forward_train(&mut self, inputs: &Tensor, rng: &mut ChaCha8Rng) -> Result<(Tensor, CipsTrace)> {
        let (n_s, _, h, w) = self.check_batch(inputs)?;
        let ch = self.config.hidden;
        let seqs: Vec<Tensor> = (0..n_s).map(|s| self.sample_seq(inputs, s)).collect();
        let trunk: Vec<(Tensor, TrunkCache)> = seqs
            .into_par_iter()
            .map(|seq| self.trunk_forward_cached(seq))
            .collect::<Result<Vec<_>>>()?;
        let mut trunk_caches = Vec::with_capacity(n_s);
        let mut batch = Tensor::zeros(&[n_s, h, w, ch]);
        for (s, (out, cache)) in trunk.into_iter().enumerate() {
            batch.data_mut()[s * out.len()..(s + 1) * out.len()].copy_from_slice(out.data());
            trunk_caches.push(cache);
        }

        let (b1, bn1_cache) = self.bn1.forward_train(&batch);
        let r1 = relu(&b1);
        let c1 = self.conv_batch(&r1, &self.conv1)?;
        let (b2, bn2_cache) = self.bn2.forward_train(&c1);
        let r2 = relu(&b2);
        let c2 = self.conv_batch(&r2, &self.conv2)?;
        let (b3, bn3_cache) = self.bn3.forward_train(&c2);
        let r3 = relu(&b3);

        let (head_in, mask) = if self.config.dropout > 0.0 {
            let mask = dropout_mask(r3.len(), self.config.dropout, rng);
            (apply_mask(&r3, &mask), Some(mask))
        } else {
            (r3.clone(), None)
        };
        let logits = self.conv_batch(&head_in, &self.head)?;
        let pred = sigmoid(&logits);

        let trace = CipsTrace {
            trunk_caches,
            bn1_cache,
            r1,
            bn2_cache,
            r2,
            bn3_cache,
            r3,
            dropout: mask,
            head_in,
            pred: pred.clone(),
        };
        Ok((pred, trace))
    }

    /// Backward through a recorded training forward, given `∂loss/∂pred`.
    /// Gradient accumulation runs in fixed sample order, so results are
    /// identical regardless of thread count.
    pub fn backward(&self, trace: &CipsTrace, grad_pred: &Tensor) -> Result<CipsGradients> {
        if grad_pred.shape() != trace.pred.shape() {
            return Err(Error::ShapeMismatch(format!(
                "grad_pred shape {:?} does not match predictions {:?}",
                grad_pred.shape(),
                trace.pred.shape()
            )));
        }
        let d_logits = sigmoid_backward(&trace.pred, grad_pred);
        let (d_head_in, g_head_k, g_head_b) = self.conv_batch_backward(&trace.head_in, &self.head, &d_logits)?;

        let d_r3 = match &trace.dropout {
            Some(mask) => apply_mask(&d_head_in, mask),
            None => d_head_in,
        };
        let d_b3 = relu_backward(&trace.r3, &d_r3);
        let (d_c2, g_bn3_g, g_bn3_b) = self.bn3.backward(&trace.bn3_cache, &d_b3);
        let (d_r2, g_conv2_k, g_conv2_b) = self.conv_batch_backward(&trace.r2, &self.conv2, &d_c2)?;
        let d_b2 = relu_backward(&trace.r2, &d_r2);
        let (d_c1, g_bn2_g, g_bn2_b) = self.bn2.backward(&trace.bn2_cache, &d_b2);
        let (d_r1, g_conv1_k, g_conv1_b) = self.conv_batch_backward(&trace.r1, &self.conv1, &d_c1)?;
        let d_b1 = relu_backward(&trace.r1, &d_r1);
        let (d_batch, g_bn1_g, g_bn1_b) = self.bn1.backward(&trace.bn1_cache, &d_b1);

        let n_s = trace.trunk_caches.len();
        let plane = d_batch.len() / n_s;
        let shape = [
            trace.trunk_caches[0].lstm2.hiddens[0].shape()[0],
            trace.trunk_caches[0].lstm2.hiddens[0].shape()[1],
            self.config.hidden,
        ];
        let trunk_grads: Vec<TrunkGrads> = (0..n_s)
            .into_par_iter()
            .map(|s| {
                let grad_out =
                    Tensor::from_vec(&shape, d_batch.data()[s * plane..(s + 1) * plane].to_vec()).unwrap();
                self.trunk_backward(&trace.trunk_caches[s], &grad_out)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut lstm1 = ConvLstmParams::zeros(self.config.kernel_size, self.config.features, self.config.hidden);
        let mut lstm2 = ConvLstmParams::zeros(self.config.kernel_size, self.config.hidden, self.config.hidden);
        let mut g_ln_gamma = Tensor::zeros(&[self.config.hidden]);
        let mut g_ln_beta = Tensor::zeros(&[self.config.hidden]);
        for tg in &trunk_grads {
            for (acc, g) in [
                (&mut lstm1.w_fg, &tg.lstm1.w_fg),
                (&mut lstm1.b_fg, &tg.lstm1.b_fg),
                (&mut lstm1.w_in, &tg.lstm1.w_in),
                (&mut lstm1.b_in, &tg.lstm1.b_in),
                (&mut lstm1.w_s, &tg.lstm1.w_s),
                (&mut lstm1.b_s, &tg.lstm1.b_s),
                (&mut lstm1.w_out, &tg.lstm1.w_out),
                (&mut lstm1.b_out, &tg.lstm1.b_out),
                (&mut lstm2.w_fg, &tg.lstm2.w_fg),
                (&mut lstm2.b_fg, &tg.lstm2.b_fg),
                (&mut lstm2.w_in, &tg.lstm2.w_in),
                (&mut lstm2.b_in, &tg.lstm2.b_in),
                (&mut lstm2.w_s, &tg.lstm2.w_s),
                (&mut lstm2.b_s, &tg.lstm2.b_s),
                (&mut lstm2.w_out, &tg.lstm2.w_out),
                (&mut lstm2.b_out, &tg.lstm2.b_out),
                (&mut g_ln_gamma, &tg.norm1_gamma),
                (&mut g_ln_beta, &tg.norm1_beta),
            ] {
                acc.add_assign(g);
            }
        }

        Ok(CipsGradients {
            tensors: vec![
                lstm1.w_fg,
                lstm1.b_fg,
                lstm1.w_in,
                lstm1.b_in,
                lstm1.w_s,
                lstm1.b_s,
                lstm1.w_out,
                lstm1.b_out,
                g_ln_gamma,
                g_ln_beta,
                lstm2.w_fg,
                lstm2.b_fg,
                lstm2.w_in,
                lstm2.b_in,
                lstm2.w_s,
                lstm2.b_s,
                lstm2.w_out,
                lstm2.b_out,
                g_bn1_g,
                g_bn1_b,
                g_conv1_k,
                g_conv1_b,
                g_bn2_g,
                g_bn2_b,
                g_conv2_k,
                g_conv2_b,
                g_bn3_g,
                g_bn3_b,
                g_head_k,
                g_head_b,
            ],
        })
    }

    /// Applies one conv layer to every sample of a `(n_s, h, w, c)` batch.
    fn conv_batch(&self, x: &Tensor, layer: &Conv2dParams) -> Result<Tensor> {
        let shape = x.shape();
        let (n_s, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let c_out = layer.kernel.shape()[3];
        let mut out = Tensor::zeros(&[n_s, h, w, c_out]);
        let plane_in = h * w * c;
        let plane_out = h * w * c_out;
        for s in 0..n_s {
            let sample = Tensor::from_vec(&[h, w, c], x.data()[s * plane_in..(s + 1) * plane_in].to_vec())?;
            let y = conv2d(&sample, &layer.kernel, &layer.bias)?;
            out.data_mut()[s * plane_out..(s + 1) * plane_out].copy_from_slice(y.data());
        }
        Ok(out)
    }

    /// Per-sample conv backward with gradients summed in sample order.
    fn conv_batch_backward(
        &self,
        x: &Tensor,
        layer: &Conv2dParams,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let shape = x.shape();
        let (n_s, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let c_out = layer.kernel.shape()[3];
        let plane_in = h * w * c;
        let plane_out = h * w * c_out;
        let mut grad_x = Tensor::zeros(x.shape());
        let mut grad_k = Tensor::zeros(layer.kernel.shape());
        let mut grad_b = Tensor::zeros(layer.bias.shape());
        for s in 0..n_s {
            let sample = Tensor::from_vec(&[h, w, c], x.data()[s * plane_in..(s + 1) * plane_in].to_vec())?;
            let gout = Tensor::from_vec(
                &[h, w, c_out],
                grad_out.data()[s * plane_out..(s + 1) * plane_out].to_vec(),
            )?;
            let (gx, gk, gb) = conv2d_backward(&sample, &layer.kernel, &gout)?;
            grad_x.data_mut()[s * plane_in..(s + 1) * plane_in].copy_from_slice(gx.data());
            grad_k.add_assign(&gk);
            grad_b.add_assign(&gb);
        }
        Ok((grad_x, grad_k, grad_b))
    }
}

struct TrunkCache {
    seq: Tensor,
    lstm1: ConvLstmCache,
    ln_cache: LayerNormCache,
    relu1: Tensor,
    lstm2: ConvLstmCache,
}

struct TrunkGrads {
    lstm1: ConvLstmParams,
    norm1_gamma: Tensor,
    norm1_beta: Tensor,
    lstm2: ConvLstmParams,
}

/// Forward records consumed by [`CipsModel::backward`].
pub struct CipsTrace {
    trunk_caches: Vec<TrunkCache>,
    bn1_cache: BatchNormCache,
    r1: Tensor,
    bn2_cache: BatchNormCache,
    r2: Tensor,
    bn3_cache: BatchNormCache,
    r3: Tensor,
    dropout: Option<Vec<f64>>,
    head_in: Tensor,
    pred: Tensor,
}
