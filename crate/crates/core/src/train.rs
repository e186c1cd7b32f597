//! Training: differentiable F1 loss over soft counts, Adam with per-step
//! learning-rate decay, the 70/30 split, the patience-based training loop
//! with best-weights restoration, and transfer from a checkpoint.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::error::{Error, Result};
use crate::nn::{CipsModel, Tensor};
use crate::patch::{extract_mask_patches, PatchBatch};
use crate::stack::EliteMask;

/// Training hyperparameters.
///
/// The decay rule is per optimizer step: `lr_t = lr / (1 + decay·t)` with
/// `t` the 1-based step count. `max_epochs = 0` is allowed and returns the
/// model untouched (used by zero-epoch transfer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 1e-5,
            max_epochs: 50,
            patience: 5,
            dropout: 0.25,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::InvalidConfig(format!("decay must be >= 0, got {}", self.decay)));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
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

/// Differentiable F1 loss over soft counts, restricted to valid pixels:
///
/// ```text
/// softTP = Σ p·y    softFP = Σ p·(1−y)    softFN = Σ (1−p)·y
/// loss = 1 − 2·softTP / (2·softTP + softFP + softFN)   ∈ [0, 1]
/// ```
///
/// When every soft count is zero (all-zero predictions on an all-negative
/// target) the loss is defined as 1 with zero gradient.
pub fn soft_f1_loss(pred: &Tensor, target: &Tensor, valid: &[bool]) -> Result<f64> {
    Ok(soft_f1_loss_with_grad(pred, target, valid)?.0)
}

/// Loss plus its gradient with respect to the predictions.
pub fn soft_f1_loss_with_grad(pred: &Tensor, target: &Tensor, valid: &[bool]) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() || pred.len() != valid.len() {
        return Err(Error::ShapeMismatch(format!(
            "soft F1 operands disagree: pred {}, target {}, valid {}",
            pred.len(),
            target.len(),
            valid.len()
        )));
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::InvalidConfig("soft F1 needs at least one valid pixel".into()));
    }
    let (pd, td) = (pred.data(), target.data());
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for i in 0..pd.len() {
        if !valid[i] {
            continue;
        }
        let y = td[i];
        if y != 0.0 && y != 1.0 {
            return Err(Error::InvalidConfig(format!("target[{i}] = {y} is not binary")));
        }
        let p = pd[i];
        tp += p * y;
        fp += p * (1.0 - y);
        fn_ += (1.0 - p) * y;
    }
    let denom = 2.0 * tp + fp + fn_;
    let mut grad = Tensor::zeros(pred.shape());
    if denom == 0.0 {
        return Ok((1.0, grad));
    }
    let loss = 1.0 - 2.0 * tp / denom;
    // d/dp_i [1 − 2T/D] with dT/dp_i = y_i and dD/dp_i = 1.
    let gd = grad.data_mut();
    for i in 0..pd.len() {
        if valid[i] {
            gd[i] = -2.0 * (td[i] * denom - tp) / (denom * denom);
        }
    }
    Ok((loss, grad))
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second Adam moments for a fixed parameter list, plus the step
/// count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One Adam update over aligned parameter/gradient lists. Standard update
/// with bias correction; the learning rate follows the decay rule.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    hp: &HyperParams,
) -> Result<()> {
    hp.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam operands disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                name: format!("parameter {i}"),
                index: j,
            });
        }
    }
    state.t += 1;
    let t = state.t;
    let lr_t = hp.learning_rate / (1.0 + hp.decay * t as f64);
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gi;
            vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= lr_t * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Labeled patches ready for the network: inputs `(n_s, n_t, h, w, f)`,
/// binary targets `(n_s, h, w)`, and a per-pixel validity mask that excludes
/// both tiling padding and invalid truth pixels from the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub valid: Vec<bool>,
}

impl TrainingSet {
    /// Pairs feature patches with mask patches cut on the same tile grid.
    pub fn from_scene(batch: &PatchBatch, truth: &EliteMask) -> Result<Self> {
        let (targets, mask_valid, origins) = extract_mask_patches(truth)?;
        if origins != batch.origins {
            return Err(Error::ShapeMismatch(format!(
                "mask tiling ({} tiles for {}x{}) does not match the patch grid ({} tiles)",
                origins.len(),
                truth.height,
                truth.width,
                batch.origins.len()
            )));
        }
        let valid: Vec<bool> = batch
            .valid
            .iter()
            .zip(&mask_valid)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(Self {
            inputs: batch.data.clone(),
            targets,
            valid,
        })
    }

    pub fn samples(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn features(&self) -> usize {
        *self.inputs.shape().last().unwrap()
    }

    fn pixels_per_sample(&self) -> usize {
        self.targets.len() / self.samples()
    }

    /// Gathers a subset of samples, in the order given.
    pub fn select(&self, indices: &[usize]) -> TrainingSet {
        let in_shape = self.inputs.shape();
        let in_step: usize = in_shape[1..].iter().product();
        let px = self.pixels_per_sample();
        let mut inputs = Tensor::zeros(&[&[indices.len()], &in_shape[1..]].concat());
        let mut targets = Tensor::zeros(&[&[indices.len()], &self.targets.shape()[1..]].concat());
        let mut valid = Vec::with_capacity(indices.len() * px);
        for (dst, &s) in indices.iter().enumerate() {
            inputs.data_mut()[dst * in_step..(dst + 1) * in_step]
                .copy_from_slice(&self.inputs.data()[s * in_step..(s + 1) * in_step]);
            targets.data_mut()[dst * px..(dst + 1) * px]
                .copy_from_slice(&self.targets.data()[s * px..(s + 1) * px]);
            valid.extend_from_slice(&self.valid[s * px..(s + 1) * px]);
        }
        TrainingSet {
            inputs,
            targets,
            valid,
        }
    }

    /// Stacks several scenes' patch sets along the sample axis.
    pub fn concat(sets: &[TrainingSet]) -> Result<TrainingSet> {
        let first = sets.first().ok_or_else(|| Error::InvalidConfig("no training scenes".into()))?;
        let tail_shape = &first.inputs.shape()[1..];
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut valid = Vec::new();
        let mut n = 0;
        for s in sets {
            if &s.inputs.shape()[1..] != tail_shape {
                return Err(Error::ShapeMismatch(format!(
                    "scene patch shape {:?} differs from {:?}",
                    &s.inputs.shape()[1..],
                    tail_shape
                )));
            }
            inputs.extend_from_slice(s.inputs.data());
            targets.extend_from_slice(s.targets.data());
            valid.extend_from_slice(&s.valid);
            n += s.samples();
        }
        Ok(TrainingSet {
            inputs: Tensor::from_vec(&[&[n], tail_shape].concat(), inputs)?,
            targets: Tensor::from_vec(&[&[n], &first.targets.shape()[1..]].concat(), targets)?,
            valid,
        })
    }
}

/// Seeded shuffle of `0..n`, split as first `⌈0.7·n⌉` train / rest val.
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut order, &mut rng);
    let n_train = (7 * n).div_ceil(10);
    let val = order.split_off(n_train);
    Ok((order, val))
}

/// 70/30 split of a patch set by seeded shuffle.
pub fn split_train_val(set: &TrainingSet, seed: u64) -> Result<(TrainingSet, TrainingSet)> {
    let (train_idx, val_idx) = split_indices(set.samples(), seed)?;
    Ok((set.select(&train_idx), set.select(&val_idx)))
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Patience rule: stop once the validation loss has failed to improve for
/// `patience` consecutive epochs. Improvement is a strict decrease.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Feeds one epoch's validation loss; returns true when training should
    /// stop. Also reports whether this epoch improved the best loss.
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            (false, true)
        } else {
            self.stale += 1;
            (self.stale >= self.patience, false)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Hard F1 (fraction in [0, 1]) on the validation set at threshold 0.5.
    pub val_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped { best_epoch: usize },
    Diverged { epoch: usize },
}

#[derive(Debug)]
pub struct FitOutput {
    pub model: CipsModel,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Hard-threshold validation scores as fractions in [0, 1].
pub fn hard_scores(pred: &Tensor, target: &Tensor, valid: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for ((&p, &y), &ok) in pred.data().iter().zip(target.data()).zip(valid) {
        if !ok {
            continue;
        }
        let p = p > threshold;
        let y = y != 0.0;
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    let total = tp + fp + fn_ + tn;
    let acc = if total == 0 { 0.0 } else { (tp + tn) as f64 / total as f64 };
    (f1, acc)
}

/// Minibatch training with early stopping and best-weights restoration.
///
/// Deterministic: (seed, data, hyperparameters) fully determine the output,
/// including the shuffle order and dropout masks. A non-finite loss or
/// gradient aborts with [`Error::Diverged`], which carries the best
/// checkpoint seen so far.
pub fn fit(model: CipsModel, train_set: &TrainingSet, val_set: &TrainingSet, hp: &HyperParams) -> Result<FitOutput> {
    hp.validate()?;
    let mut model = model;
    model.config.dropout = hp.dropout;
    if train_set.samples() == 0 {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if hp.max_epochs == 0 {
        return Ok(FitOutput {
            model,
            history: Vec::new(),
            stop: StopReason::MaxEpochs,
        });
    }
    if val_set.samples() == 0 {
        return Err(Error::InvalidConfig("validation set is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut adam = AdamState::new(&model.trainables());
    let mut stopper = EarlyStopping::new(hp.patience);
    let mut history = Vec::new();
    let mut best_model = model.clone();

    let diverged = |epoch: usize, best_model: CipsModel, history: Vec<EpochRecord>| -> Error {
        Error::Diverged {
            epoch,
            output: Box::new(FitOutput {
                model: best_model,
                history,
                stop: StopReason::Diverged { epoch },
            }),
        }
    };

    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=hp.max_epochs {
        let mut order: Vec<usize> = (0..train_set.samples()).collect();
        shuffle(&mut order, &mut rng);

        let mut batch_losses = Vec::new();
        for chunk in order.chunks(hp.batch_size) {
            let batch = train_set.select(chunk);
            let (pred, trace) = model.forward_train(&batch.inputs, &mut rng)?;
            let (loss, dpred) = soft_f1_loss_with_grad(&pred, &batch.targets, &batch.valid)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, best_model, history));
            }
            batch_losses.push(loss);
            let grads = model.backward(&trace, &dpred)?;
            let non_finite = grads
                .tensors
                .iter()
                .any(|g| g.data().iter().any(|v| !v.is_finite()));
            if non_finite {
                return Err(diverged(epoch, best_model, history));
            }
            let grad_refs: Vec<&Tensor> = grads.tensors.iter().collect();
            let mut params = model.trainables_mut();
            adam_step(&mut params, &grad_refs, &mut adam, hp)?;
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;

        let val_pred = model.forward_eval(&val_set.inputs)?;
        let val_loss = soft_f1_loss(&val_pred, &val_set.targets, &val_set.valid)?;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, best_model, history));
        }
        let (val_f1, _) = hard_scores(&val_pred, &val_set.targets, &val_set.valid, 0.5);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });

        let (should_stop, improved) = stopper.update(epoch, val_loss);
        if improved {
            best_model = model.clone();
        }
        if should_stop {
            stop = StopReason::EarlyStopped {
                best_epoch: stopper.best_epoch(),
            };
            break;
        }
    }

    Ok(FitOutput {
        model: best_model,
        history,
        stop,
    })
}

/// Loads checkpoint parameters (optimizer state is discarded; transfer
/// restarts with fresh moments), optionally changes the dropout ratio, and
/// continues training on new data.
pub fn transfer(
    checkpoint_path: impl AsRef<Path>,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    hp: &HyperParams,
) -> Result<FitOutput> {
    let (model, _optimizer) = load_checkpoint(checkpoint_path)?;
    if model.config.features != train_set.features() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint expects {} feature planes, data has {}",
            model.config.features,
            train_set.features()
        )));
    }
    fit(model, train_set, val_set, hp)
}

/// Writes the history CSV: `epoch,train_loss,val_loss,val_f1`.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,val_f1\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_f1));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, CipsConfig};

    #[test]
    fn soft_f1_exact_predictions_have_zero_loss() {
        let y = Tensor::from_vec(&[4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let p = y.clone();
        let valid = vec![true; 4];
        assert_eq!(soft_f1_loss(&p, &y, &valid).unwrap(), 0.0);
    }

    #[test]
    fn soft_f1_inverted_predictions_have_unit_loss() {
        let y = Tensor::from_vec(&[4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let p = Tensor::from_vec(&[4], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let valid = vec![true; 4];
        assert_eq!(soft_f1_loss(&p, &y, &valid).unwrap(), 1.0);
    }

    #[test]
    fn soft_f1_hand_computed_example() {
        // p = (0.5, 0.5), y = (1, 0): softTP = softFP = softFN = 0.5 → loss 0.5.
        let y = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let p = Tensor::from_vec(&[2], vec![0.5, 0.5]).unwrap();
        let loss = soft_f1_loss(&p, &y, &[true, true]).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn soft_f1_degenerate_all_zero_case() {
        let y = Tensor::zeros(&[3]);
        let p = Tensor::zeros(&[3]);
        let (loss, grad) = soft_f1_loss_with_grad(&p, &y, &[true; 3]).unwrap();
        assert_eq!(loss, 1.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn soft_f1_requires_a_valid_pixel_and_binary_targets() {
        let y = Tensor::zeros(&[2]);
        let p = Tensor::filled(&[2], 0.5);
        assert!(soft_f1_loss(&p, &y, &[false, false]).is_err());
        let bad = Tensor::from_vec(&[2], vec![0.5, 1.0]).unwrap();
        assert!(soft_f1_loss(&p, &bad, &[true, true]).is_err());
    }

    #[test]
    fn soft_f1_ignores_invalid_pixels() {
        let y = Tensor::from_vec(&[3], vec![1.0, 0.0, 1.0]).unwrap();
        let p = Tensor::from_vec(&[3], vec![0.9, 0.1, 0.0]).unwrap();
        // Last pixel (a miss) masked out: loss computed on the first two only.
        let masked = soft_f1_loss(&p, &y, &[true, true, false]).unwrap();
        let y2 = Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap();
        let p2 = Tensor::from_vec(&[2], vec![0.9, 0.1]).unwrap();
        let direct = soft_f1_loss(&p2, &y2, &[true, true]).unwrap();
        assert!((masked - direct).abs() < 1e-15);
    }

    #[test]
    fn soft_f1_gradient_matches_finite_differences() {
        let y = Tensor::from_vec(&[6], vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let p = Tensor::from_vec(&[6], vec![0.8, 0.2, 0.4, 0.9, 0.6, 0.1]).unwrap();
        let valid = [true, true, false, true, true, true];
        let (_, grad) = soft_f1_loss_with_grad(&p, &y, &valid).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut plus = p.clone();
            plus.data_mut()[i] += h;
            let mut minus = p.clone();
            minus.data_mut()[i] -= h;
            let fd = (soft_f1_loss(&plus, &y, &valid).unwrap() - soft_f1_loss(&minus, &y, &valid).unwrap())
                / (2.0 * h);
            let rel = (grad.data()[i] - fd).abs() / (1.0 + fd.abs());
            assert!(rel <= 1e-4, "i={i}: {} vs {fd}", grad.data()[i]);
        }
    }

    fn scalar_params(value: f64) -> (Vec<Tensor>, HyperParams) {
        (vec![Tensor::filled(&[1], value)], HyperParams::default())
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let (mut params, hp) = scalar_params(3.5);
        let mut state = AdamState::new(&params.iter().collect::<Vec<_>>());
        // One real step to populate the moments, then zero gradients.
        let g1 = Tensor::filled(&[1], 1.0);
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        adam_step(&mut refs, &[&g1], &mut state, &hp).unwrap();
        let after_real = refs[0].data()[0];
        let m_after = state.m[0].data()[0];

        let g0 = Tensor::zeros(&[1]);
        for _ in 0..5 {
            adam_step(&mut refs, &[&g0], &mut state, &hp).unwrap();
        }
        // Moments decay toward zero; the tiny residual updates shrink too.
        assert!(state.m[0].data()[0].abs() < m_after.abs());
        assert!((refs[0].data()[0] - after_real).abs() < 0.01);

        // From a fresh state, a zero gradient changes nothing at all.
        let mut fresh = [Tensor::filled(&[1], 2.0)];
        let mut fresh_state = AdamState::new(&fresh.iter().collect::<Vec<_>>());
        let mut fresh_refs: Vec<&mut Tensor> = fresh.iter_mut().collect();
        adam_step(&mut fresh_refs, &[&g0], &mut fresh_state, &hp).unwrap();
        assert_eq!(fresh_refs[0].data()[0], 2.0);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let (mut params, mut hp) = scalar_params(0.0);
        hp.learning_rate = 0.001;
        hp.decay = 0.0;
        let mut state = AdamState::new(&params.iter().collect::<Vec<_>>());
        let g = Tensor::filled(&[1], 1.0);
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        adam_step(&mut refs, &[&g], &mut state, &hp).unwrap();
        let delta = refs[0].data()[0];
        assert!((delta + 0.001).abs() < 1e-9, "Δθ = {delta}");
    }

    #[test]
    fn adam_updates_are_elementwise_independent() {
        let mut params = [Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap()];
        let hp = HyperParams::default();
        let mut state = AdamState::new(&params.iter().collect::<Vec<_>>());
        let g = Tensor::from_vec(&[2], vec![0.3, 0.3]).unwrap();
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        adam_step(&mut refs, &[&g], &mut state, &hp).unwrap();
        let d0 = refs[0].data()[0] - 1.0;
        let d1 = refs[0].data()[1] + 2.0;
        assert!((d0 - d1).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let (mut params, hp) = scalar_params(0.0);
        let mut state = AdamState::new(&params.iter().collect::<Vec<_>>());
        let g = Tensor::filled(&[1], f64::NAN);
        let mut refs: Vec<&mut Tensor> = params.iter_mut().collect();
        assert!(matches!(
            adam_step(&mut refs, &[&g], &mut state, &hp),
            Err(Error::NonFiniteGradient { .. })
        ));
    }

    #[test]
    fn split_is_seeded_disjoint_and_exhaustive() {
        let (a_train, a_val) = split_indices(10, 7).unwrap();
        assert_eq!(a_train.len(), 7);
        assert_eq!(a_val.len(), 3);
        let (b_train, b_val) = split_indices(10, 7).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        let mut all: Vec<usize> = a_train.iter().chain(&a_val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split_indices(1, 0).is_err());
    }

    #[test]
    fn early_stopping_triggers_exactly_at_patience() {
        // Best at epoch 1, then five non-improving epochs → stop at epoch 6.
        let mut es = EarlyStopping::new(5);
        assert_eq!(es.update(1, 0.5), (false, true));
        for epoch in 2..=5 {
            assert_eq!(es.update(epoch, 0.5), (false, false), "epoch {epoch}");
        }
        assert_eq!(es.update(6, 0.5), (true, false));
        assert_eq!(es.best_epoch(), 1);

        // An improvement resets the counter.
        let mut es = EarlyStopping::new(2);
        es.update(1, 0.5);
        es.update(2, 0.6);
        assert_eq!(es.update(3, 0.4), (false, true));
        assert_eq!(es.update(4, 0.4), (false, false));
        assert_eq!(es.update(5, 0.4), (true, false));
    }

    /// A tiny separable set: targets follow the sign pattern of the first
    /// input feature, so a few epochs reach a useful validation F1.
    fn tiny_training_sets(n_s: usize) -> (TrainingSet, TrainingSet) {
        let (n_t, h, w, f) = (3, 6, 6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut inputs = Tensor::zeros(&[n_s, n_t, h, w, f]);
        let mut targets = Tensor::zeros(&[n_s, h, w]);
        for s in 0..n_s {
            for r in 0..h {
                for c in 0..w {
                    let hot = (r + c + s) % 2 == 0;
                    targets.set(&[s, r, c], f64::from(u8::from(hot)));
                    for t in 0..n_t {
                        let base = if hot { 0.9 } else { -0.9 };
                        let noise: f64 = rng.gen_range(-0.05..0.05);
                        inputs.set(&[s, t, r, c, 0], base + noise);
                        inputs.set(&[s, t, r, c, 1], rng.gen_range(-0.1..0.1));
                    }
                }
            }
        }
        let valid = vec![true; n_s * h * w];
        let set = TrainingSet {
            inputs,
            targets,
            valid,
        };
        let (a, b) = split_train_val(&set, 1).unwrap();
        (a, b)
    }

    fn tiny_model() -> CipsModel {
        init_params(
            &CipsConfig {
                features: 2,
                kernel_size: 3,
                hidden: 4,
                dropout: 0.2,
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn fit_is_deterministic_and_restores_best_weights() {
        let (train_set, val_set) = tiny_training_sets(6);
        let hp = HyperParams {
            max_epochs: 4,
            batch_size: 2,
            seed: 3,
            dropout: 0.2,
            ..HyperParams::default()
        };
        let out1 = fit(tiny_model(), &train_set, &val_set, &hp).unwrap();
        let out2 = fit(tiny_model(), &train_set, &val_set, &hp).unwrap();
        assert_eq!(out1.model, out2.model);
        assert_eq!(out1.history, out2.history);

        // The returned model reproduces the best recorded validation loss.
        let best = out1
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        let pred = out1.model.forward_eval(&val_set.inputs).unwrap();
        let loss = soft_f1_loss(&pred, &val_set.targets, &val_set.valid).unwrap();
        assert!((loss - best).abs() < 1e-12);
    }

    #[test]
    fn zero_epoch_fit_returns_model_unchanged() {
        let (train_set, val_set) = tiny_training_sets(4);
        let model = tiny_model();
        let hp = HyperParams {
            max_epochs: 0,
            ..HyperParams::default()
        };
        let out = fit(model.clone(), &train_set, &val_set, &hp).unwrap();
        let mut expect = model;
        expect.config.dropout = hp.dropout;
        assert_eq!(out.model, expect);
        assert!(out.history.is_empty());
    }

    #[test]
    fn divergence_aborts_with_last_good_checkpoint() {
        let (train_set, val_set) = tiny_training_sets(4);
        let mut model = tiny_model();
        // Poison one weight: the first forward produces a non-finite loss.
        model.conv1.kernel.data_mut()[0] = f64::NAN;
        let hp = HyperParams {
            max_epochs: 3,
            batch_size: 2,
            ..HyperParams::default()
        };
        match fit(model, &train_set, &val_set, &hp) {
            Err(Error::Diverged { epoch, output }) => {
                assert_eq!(epoch, 1);
                assert!(output.history.is_empty());
                assert!(matches!(output.stop, StopReason::Diverged { epoch: 1 }));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn transfer_resumes_from_lower_initial_loss() {
        let (train_set, val_set) = tiny_training_sets(6);
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("warm.ckpt");

        // A short warm-up run, checkpointed.
        let hp = HyperParams {
            max_epochs: 3,
            batch_size: 2,
            seed: 4,
            dropout: 0.2,
            ..HyperParams::default()
        };
        let warm = fit(tiny_model(), &train_set, &val_set, &hp).unwrap();
        crate::checkpoint::save_checkpoint(&ckpt, &warm.model, None).unwrap();

        // One epoch from the checkpoint vs one epoch from scratch on the
        // same data: the transferred run starts from a better validation
        // loss.
        let one_epoch = HyperParams {
            max_epochs: 1,
            ..hp
        };
        let resumed = transfer(&ckpt, &train_set, &val_set, &one_epoch).unwrap();
        let fresh = fit(tiny_model(), &train_set, &val_set, &one_epoch).unwrap();
        assert!(
            resumed.history[0].val_loss < fresh.history[0].val_loss,
            "transfer {} vs fresh {}",
            resumed.history[0].val_loss,
            fresh.history[0].val_loss
        );

        // Zero additional epochs: transfer returns the checkpoint untouched.
        let zero = HyperParams {
            max_epochs: 0,
            ..hp
        };
        let unchanged = transfer(&ckpt, &train_set, &val_set, &zero).unwrap();
        assert_eq!(unchanged.model, warm.model);
    }

    #[test]
    fn history_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let history = vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
            val_f1: 0.75,
        }];
        write_history_csv(&p, &history).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "epoch,train_loss,val_loss,val_f1\n1,0.5,0.25,0.75\n");
    }
}
