//! Convolutional LSTM: an LSTM cell whose gate transforms are same-padding
//! 2-D convolutions over the channel-concatenation of the previous hidden
//! state and the current input.
//!
//! Per step, with `z = [y_{t−1}, x_t]` (hidden channels first):
//!
//! ```text
//! fg_t = σ(conv(z, w_fg) + b_fg)         forget gate
//! in_t = σ(conv(z, w_in) + b_in)         input gate
//! S̃_t  = tanh(conv(z, w_s) + b_s)        candidate state
//! S_t  = fg_t ⊙ S_{t−1} + in_t ⊙ S̃_t     cell state
//! out_t = σ(conv(z, w_out) + b_out)      output gate
//! y_t  = out_t ⊙ tanh(S_t)               hidden state
//! ```
//!
//! The four gate convolutions share one im2col of `z` and run as a single
//! GEMM against the fused `(k²·c_z, 4·c_h)` weight matrix, gate blocks
//! ordered forget | input | candidate | output.

use crate::error::{Error, Result};
use crate::nn::conv::{col2im_add, im2col};
use crate::nn::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::nn::tensor::Tensor;

/// All gate kernels and biases of one ConvLSTM layer. Kernels have shape
/// `(k, k, c_in + c_hidden, c_hidden)` and share `(k, c_in, c_hidden)`;
/// biases have shape `(c_hidden)`. Doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmParams {
    pub w_fg: Tensor,
    pub b_fg: Tensor,
    pub w_in: Tensor,
    pub b_in: Tensor,
    pub w_s: Tensor,
    pub b_s: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl ConvLstmParams {
    pub fn zeros(k: usize, c_in: usize, c_hidden: usize) -> Self {
        let kshape = [k, k, c_in + c_hidden, c_hidden];
        let make = || Tensor::zeros(&kshape);
        let makeb = || Tensor::zeros(&[c_hidden]);
        Self {
            w_fg: make(),
            b_fg: makeb(),
            w_in: make(),
            b_in: makeb(),
            w_s: make(),
            b_s: makeb(),
            w_out: make(),
            b_out: makeb(),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.w_fg.shape()[0]
    }

    pub fn c_hidden(&self) -> usize {
        self.w_fg.shape()[3]
    }

    pub fn c_in(&self) -> usize {
        self.w_fg.shape()[2] - self.c_hidden()
    }

    fn c_z(&self) -> usize {
        self.w_fg.shape()[2]
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.w_fg.shape().to_vec();
        if shape.len() != 4 || shape[0] != shape[1] || shape[0].is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "gate kernels must be (k, k, c_z, c_h) with odd k, got {shape:?}"
            )));
        }
        if shape[2] <= shape[3] {
            return Err(Error::ShapeMismatch(format!(
                "gate kernel input channels {} must exceed hidden channels {}",
                shape[2], shape[3]
            )));
        }
        let ch = shape[3];
        for (name, w) in [("w_in", &self.w_in), ("w_s", &self.w_s), ("w_out", &self.w_out)] {
            if w.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name} shape {:?} differs from w_fg {shape:?}",
                    w.shape()
                )));
            }
        }
        for (name, b) in [
            ("b_fg", &self.b_fg),
            ("b_in", &self.b_in),
            ("b_s", &self.b_s),
            ("b_out", &self.b_out),
        ] {
            if b.shape() != [ch] {
                return Err(Error::ShapeMismatch(format!(
                    "{name} shape {:?}, expected [{ch}]",
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// Fused `(k²·c_z, 4·c_h)` weight matrix, gate blocks fg|in|s|out.
    fn fused_weights(&self) -> Vec<f64> {
        let rows = self.kernel_size() * self.kernel_size() * self.c_z();
        let ch = self.c_hidden();
        let mut fused = vec![0.0; rows * 4 * ch];
        let gates = [&self.w_fg, &self.w_in, &self.w_s, &self.w_out];
        for r in 0..rows {
            for (g, w) in gates.iter().enumerate() {
                let dst = r * 4 * ch + g * ch;
                fused[dst..dst + ch].copy_from_slice(&w.data()[r * ch..(r + 1) * ch]);
            }
        }
        fused
    }

    fn fused_bias(&self) -> Vec<f64> {
        let ch = self.c_hidden();
        let mut fused = vec![0.0; 4 * ch];
        for (g, b) in [&self.b_fg, &self.b_in, &self.b_s, &self.b_out].iter().enumerate() {
            fused[g * ch..(g + 1) * ch].copy_from_slice(b.data());
        }
        fused
    }

    /// Splits a fused weight/bias gradient back into per-gate tensors.
    fn split_fused(&self, dw: &[f64], db: &[f64]) -> Self {
        let rows = self.kernel_size() * self.kernel_size() * self.c_z();
        let ch = self.c_hidden();
        let kshape = self.w_fg.shape();
        let mut grads = ConvLstmParams::zeros(self.kernel_size(), self.c_in(), ch);
        {
            let outs = [
                &mut grads.w_fg,
                &mut grads.w_in,
                &mut grads.w_s,
                &mut grads.w_out,
            ];
            for (g, w) in outs.into_iter().enumerate() {
                debug_assert_eq!(w.shape(), kshape);
                let data = w.data_mut();
                for r in 0..rows {
                    let src = r * 4 * ch + g * ch;
                    data[r * ch..(r + 1) * ch].copy_from_slice(&dw[src..src + ch]);
                }
            }
        }
        for (g, b) in [
            &mut grads.b_fg,
            &mut grads.b_in,
            &mut grads.b_s,
            &mut grads.b_out,
        ]
        .into_iter()
        .enumerate()
        {
            b.data_mut().copy_from_slice(&db[g * ch..(g + 1) * ch]);
        }
        grads
    }
}

/// Hidden and cell state of one layer, both `(h, w, c_hidden)` and zero at
/// the start of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl ConvLstmState {
    pub fn zeros(h: usize, w: usize, c_hidden: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[h, w, c_hidden]),
            cell: Tensor::zeros(&[h, w, c_hidden]),
        }
    }
}

fn check_step_shapes(x: &Tensor, params: &ConvLstmParams) -> Result<(usize, usize)> {
    params.validate()?;
    let shape = x.shape();
    if shape.len() != 3 || shape[2] != params.c_in() {
        return Err(Error::ShapeMismatch(format!(
            "cell input shape {shape:?}, expected (h, w, {})",
            params.c_in()
        )));
    }
    Ok((shape[0], shape[1]))
}

/// One raw step: writes post-activation gates `(h·w, 4·c_h)`, the new cell
/// state, and the new hidden state.
#[allow(clippy::too_many_arguments)]
fn step_raw(
    x: &[f64],
    y_prev: &[f64],
    s_prev: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    ch: usize,
    k: usize,
    fused_w: &[f64],
    fused_b: &[f64],
    z: &mut [f64],
    cols: &mut [f64],
) -> (Tensor, Tensor, Tensor) {
    let pixels = h * w;
    let cz = c_in + ch;
    for p in 0..pixels {
        z[p * cz..p * cz + ch].copy_from_slice(&y_prev[p * ch..(p + 1) * ch]);
        z[p * cz + ch..(p + 1) * cz].copy_from_slice(&x[p * c_in..(p + 1) * c_in]);
    }
    im2col(z, h, w, cz, k, cols);

    let mut gates = Tensor::zeros(&[h, w, 4 * ch]);
    gemm_nn(pixels, k * k * cz, 4 * ch, cols, fused_w, 0.0, gates.data_mut());
    let gd = gates.data_mut();
    for p in 0..pixels {
        let base = p * 4 * ch;
        for i in 0..4 * ch {
            let pre = gd[base + i] + fused_b[i];
            // Gate blocks: σ for fg/in/out, tanh for the candidate block.
            gd[base + i] = if (2 * ch..3 * ch).contains(&i) {
                pre.tanh()
            } else {
                1.0 / (1.0 + (-pre).exp())
            };
        }
    }

    let mut cell = Tensor::zeros(&[h, w, ch]);
    let mut hidden = Tensor::zeros(&[h, w, ch]);
    let (cd, hd) = (cell.data_mut(), hidden.data_mut());
    let gd = gates.data();
    for p in 0..pixels {
        let gb = p * 4 * ch;
        for i in 0..ch {
            let fg = gd[gb + i];
            let ing = gd[gb + ch + i];
            let cand = gd[gb + 2 * ch + i];
            let out = gd[gb + 3 * ch + i];
            let s = fg * s_prev[p * ch + i] + ing * cand;
            cd[p * ch + i] = s;
            hd[p * ch + i] = out * s.tanh();
        }
    }
    (gates, cell, hidden)
}

/// Applies one cell update to an explicit state.
pub fn convlstm_cell_step(x: &Tensor, state: &ConvLstmState, params: &ConvLstmParams) -> Result<ConvLstmState> {
    let (h, w) = check_step_shapes(x, params)?;
    let ch = params.c_hidden();
    if state.hidden.shape() != [h, w, ch] || state.cell.shape() != [h, w, ch] {
        return Err(Error::ShapeMismatch(format!(
            "state shape {:?}/{:?}, expected [{h}, {w}, {ch}]",
            state.hidden.shape(),
            state.cell.shape()
        )));
    }
    let (c_in, k, cz) = (params.c_in(), params.kernel_size(), params.c_z());
    let mut z = vec![0.0; h * w * cz];
    let mut cols = vec![0.0; h * w * k * k * cz];
    let (_, cell, hidden) = step_raw(
        x.data(),
        state.hidden.data(),
        state.cell.data(),
        h,
        w,
        c_in,
        ch,
        k,
        &params.fused_weights(),
        &params.fused_bias(),
        &mut z,
        &mut cols,
    );
    Ok(ConvLstmState { hidden, cell })
}

/// Per-step forward records needed for backpropagation through time
/// (produced by [`convlstm_forward_cached`], consumed by
/// [`convlstm_backward`]).
pub struct ConvLstmCache {
    /// Post-activation gates per step, `(h, w, 4·c_h)`.
    pub gates: Vec<Tensor>,
    /// Cell states per step.
    pub cells: Vec<Tensor>,
    /// Hidden states per step.
    pub hiddens: Vec<Tensor>,
}

impl ConvLstmCache {
    /// Stacks the hidden states into `(T, h, w, c_h)`.
    pub fn hiddens_tensor(&self) -> Tensor {
        let t = self.hiddens.len();
        let shape = self.hiddens[0].shape();
        let mut out = Tensor::zeros(&[t, shape[0], shape[1], shape[2]]);
        let step = self.hiddens[0].len();
        for (i, hid) in self.hiddens.iter().enumerate() {
            out.data_mut()[i * step..(i + 1) * step].copy_from_slice(hid.data());
        }
        out
    }
}

fn check_seq_shapes(seq: &Tensor, params: &ConvLstmParams) -> Result<(usize, usize, usize)> {
    params.validate()?;
    let shape = seq.shape();
    if shape.len() != 4 || shape[3] != params.c_in() {
        return Err(Error::ShapeMismatch(format!(
            "sequence shape {shape:?}, expected (n_t, h, w, {})",
            params.c_in()
        )));
    }
    if shape[0] == 0 {
        return Err(Error::ShapeMismatch("sequence needs at least one step".into()));
    }
    Ok((shape[0], shape[1], shape[2]))
}

pub fn convlstm_forward_cached(seq: &Tensor, params: &ConvLstmParams) -> Result<ConvLstmCache> {
    let (n_t, h, w) = check_seq_shapes(seq, params)?;
    let (c_in, ch, k, cz) = (params.c_in(), params.c_hidden(), params.kernel_size(), params.c_z());
    let fused_w = params.fused_weights();
    let fused_b = params.fused_bias();
    let mut z = vec![0.0; h * w * cz];
    let mut cols = vec![0.0; h * w * k * k * cz];
    let zeros = vec![0.0; h * w * ch];
    let step_len = h * w * c_in;

    let mut cache = ConvLstmCache {
        gates: Vec::with_capacity(n_t),
        cells: Vec::with_capacity(n_t),
        hiddens: Vec::with_capacity(n_t),
    };
    for t in 0..n_t {
        let x = &seq.data()[t * step_len..(t + 1) * step_len];
        let (y_prev, s_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (cache.hiddens[t - 1].data(), cache.cells[t - 1].data())
        };
        let (gates, cell, hidden) =
            step_raw(x, y_prev, s_prev, h, w, c_in, ch, k, &fused_w, &fused_b, &mut z, &mut cols);
        cache.gates.push(gates);
        cache.cells.push(cell);
        cache.hiddens.push(hidden);
    }
    Ok(cache)
}

/// Folds the cell over a sequence from the zero state. Returns all hidden
/// states `(n_t, h, w, c_h)` or only the final one `(h, w, c_h)`.
pub fn convlstm_forward(seq: &Tensor, params: &ConvLstmParams, return_sequences: bool) -> Result<Tensor> {
    let cache = convlstm_forward_cached(seq, params)?;
    if return_sequences {
        Ok(cache.hiddens_tensor())
    } else {
        Ok(cache.hiddens.last().unwrap().clone())
    }
}

/// Backpropagation through time. `grad_hiddens` carries the upstream
/// gradient for every step's hidden output, `(n_t, h, w, c_h)` (zero rows
/// for steps without upstream use). Returns the parameter gradients and the
/// gradient with respect to the input sequence.
pub fn convlstm_backward(
    seq: &Tensor,
    params: &ConvLstmParams,
    cache: &ConvLstmCache,
    grad_hiddens: &Tensor,
) -> Result<(ConvLstmParams, Tensor)> {
    let (n_t, h, w) = check_seq_shapes(seq, params)?;
    let (c_in, ch, k, cz) = (params.c_in(), params.c_hidden(), params.kernel_size(), params.c_z());
    if grad_hiddens.shape() != [n_t, h, w, ch] {
        return Err(Error::ShapeMismatch(format!(
            "grad_hiddens shape {:?}, expected [{n_t}, {h}, {w}, {ch}]",
            grad_hiddens.shape()
        )));
    }
    let pixels = h * w;
    let rows = k * k * cz;
    let fused_w = params.fused_weights();
    let mut dw_fused = vec![0.0; rows * 4 * ch];
    let mut db_fused = vec![0.0; 4 * ch];

    let mut grad_seq = Tensor::zeros(seq.shape());
    let mut dy_carry = vec![0.0; pixels * ch];
    let mut ds_carry = vec![0.0; pixels * ch];
    let zeros = vec![0.0; pixels * ch];

    let mut z = vec![0.0; pixels * cz];
    let mut cols = vec![0.0; pixels * rows];
    let mut dpre = vec![0.0; pixels * 4 * ch];
    let mut dcols = vec![0.0; pixels * rows];
    let mut dz = vec![0.0; pixels * cz];

    let step_len = pixels * c_in;
    for t in (0..n_t).rev() {
        let gates = cache.gates[t].data();
        let s_t = cache.cells[t].data();
        let s_prev = if t == 0 { &zeros[..] } else { cache.cells[t - 1].data() };
        let up = &grad_hiddens.data()[t * pixels * ch..(t + 1) * pixels * ch];

        for p in 0..pixels {
            let gb = p * 4 * ch;
            for i in 0..ch {
                let idx = p * ch + i;
                let fg = gates[gb + i];
                let ing = gates[gb + ch + i];
                let cand = gates[gb + 2 * ch + i];
                let out = gates[gb + 3 * ch + i];
                let tanh_s = s_t[idx].tanh();

                let dy = up[idx] + dy_carry[idx];
                let d_out = dy * tanh_s;
                let ds = ds_carry[idx] + dy * out * (1.0 - tanh_s * tanh_s);

                let d_fg = ds * s_prev[idx];
                let d_in = ds * cand;
                let d_cand = ds * ing;
                ds_carry[idx] = ds * fg;

                dpre[gb + i] = d_fg * fg * (1.0 - fg);
                dpre[gb + ch + i] = d_in * ing * (1.0 - ing);
                dpre[gb + 2 * ch + i] = d_cand * (1.0 - cand * cand);
                dpre[gb + 3 * ch + i] = d_out * out * (1.0 - out);
            }
        }

        for p in 0..pixels {
            for i in 0..4 * ch {
                db_fused[i] += dpre[p * 4 * ch + i];
            }
        }

        // Rebuild z_t and its im2col for the weight and input gradients.
        let x = &seq.data()[t * step_len..(t + 1) * step_len];
        let y_prev = if t == 0 { &zeros[..] } else { cache.hiddens[t - 1].data() };
        for p in 0..pixels {
            z[p * cz..p * cz + ch].copy_from_slice(&y_prev[p * ch..(p + 1) * ch]);
            z[p * cz + ch..(p + 1) * cz].copy_from_slice(&x[p * c_in..(p + 1) * c_in]);
        }
        im2col(&z, h, w, cz, k, &mut cols);
        gemm_tn(rows, pixels, 4 * ch, &cols, &dpre, 1.0, &mut dw_fused);
        gemm_nt(pixels, 4 * ch, rows, &dpre, &fused_w, 0.0, &mut dcols);
        dz.fill(0.0);
        col2im_add(&dcols, h, w, cz, k, &mut dz);

        let gs = grad_seq.data_mut();
        for p in 0..pixels {
            dy_carry[p * ch..(p + 1) * ch].copy_from_slice(&dz[p * cz..p * cz + ch]);
            gs[t * step_len + p * c_in..t * step_len + (p + 1) * c_in]
                .copy_from_slice(&dz[p * cz + ch..(p + 1) * cz]);
        }
    }

    Ok((params.split_fused(&dw_fused, &db_fused), grad_seq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(k: usize, c_in: usize, ch: usize, rng: &mut ChaCha8Rng) -> ConvLstmParams {
        let mut p = ConvLstmParams::zeros(k, c_in, ch);
        for w in [&mut p.w_fg, &mut p.w_in, &mut p.w_s, &mut p.w_out] {
            for v in w.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        for b in [&mut p.b_fg, &mut p.b_in, &mut p.b_s, &mut p.b_out] {
            for v in b.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn zero_params_zero_state_stay_at_zero() {
        // All-zero parameters: gates are σ(0) = 0.5 and the candidate is
        // tanh(0) = 0, so S₁ = 0 and y₁ = 0.
        let params = ConvLstmParams::zeros(3, 2, 4);
        let x = Tensor::filled(&[5, 5, 2], 0.7);
        let state = ConvLstmState::zeros(5, 5, 4);
        let next = convlstm_cell_step(&x, &state, &params).unwrap();
        assert!(next.cell.data().iter().all(|&v| v == 0.0));
        assert!(next.hidden.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_unit_cell_state_closed_form() {
        // With gates pinned at 0.5: S₁ = 0.5·S₀ and y₁ = 0.5·tanh(S₁).
        let params = ConvLstmParams::zeros(3, 2, 3);
        let x = Tensor::filled(&[4, 4, 2], -0.3);
        let state = ConvLstmState {
            hidden: Tensor::zeros(&[4, 4, 3]),
            cell: Tensor::filled(&[4, 4, 3], 1.0),
        };
        let next = convlstm_cell_step(&x, &state, &params).unwrap();
        let expect_cell = 0.5;
        let expect_hidden = 0.5 * 0.5f64.tanh();
        for (&c, &h) in next.cell.data().iter().zip(next.hidden.data()) {
            assert!((c - expect_cell).abs() < 1e-15);
            assert!((h - expect_hidden).abs() < 1e-15);
        }
    }

    /// Independently coded scalar LSTM: one pixel, 1×1 kernel, one channel.
    fn scalar_lstm(xs: &[f64], p: &ConvLstmParams) -> Vec<(f64, f64)> {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        // Kernel layout (1,1,2,1): index 0 weights y_prev, index 1 weights x.
        let wf = (p.w_fg.data()[0], p.w_fg.data()[1]);
        let wi = (p.w_in.data()[0], p.w_in.data()[1]);
        let ws = (p.w_s.data()[0], p.w_s.data()[1]);
        let wo = (p.w_out.data()[0], p.w_out.data()[1]);
        let (bf, bi, bs, bo) = (p.b_fg.data()[0], p.b_in.data()[0], p.b_s.data()[0], p.b_out.data()[0]);
        let (mut y, mut s) = (0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for &x in xs {
            let fg = sig(wf.0 * y + wf.1 * x + bf);
            let ing = sig(wi.0 * y + wi.1 * x + bi);
            let cand = (ws.0 * y + ws.1 * x + bs).tanh();
            let out = sig(wo.0 * y + wo.1 * x + bo);
            s = fg * s + ing * cand;
            y = out * s.tanh();
            trace.push((y, s));
        }
        trace
    }

    #[test]
    fn degenerate_cell_matches_scalar_lstm() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = random_params(1, 1, 1, &mut rng);
        let xs: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let seq = Tensor::from_vec(&[6, 1, 1, 1], xs.clone()).unwrap();
        let hiddens = convlstm_forward(&seq, &params, true).unwrap();
        let oracle = scalar_lstm(&xs, &params);
        for (t, (ours, expect)) in hiddens.data().iter().zip(&oracle).enumerate() {
            assert!(
                (ours - expect.0).abs() <= 1e-12,
                "step {t}: {ours} vs {}",
                expect.0
            );
        }
    }

    #[test]
    fn single_step_sequence_equals_cell_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(3, 2, 3, &mut rng);
        let x = random_tensor(&[4, 5, 2], &mut rng);
        let state = ConvLstmState::zeros(4, 5, 3);
        let stepped = convlstm_cell_step(&x, &state, &params).unwrap();
        let mut seq = Tensor::zeros(&[1, 4, 5, 2]);
        seq.data_mut().copy_from_slice(x.data());
        let last = convlstm_forward(&seq, &params, false).unwrap();
        assert_eq!(last, stepped.hidden);
    }

    #[test]
    fn hidden_bounded_and_cell_grows_slower_than_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..5 {
            let params = random_params(3, 2, 2, &mut rng);
            let n_t = 4 + trial;
            let seq = random_tensor(&[n_t, 3, 3, 2], &mut rng);
            let cache = convlstm_forward_cached(&seq, &params).unwrap();
            for t in 0..n_t {
                for &y in cache.hiddens[t].data() {
                    assert!(y > -1.0 && y < 1.0);
                }
                for &s in cache.cells[t].data() {
                    assert!(s.abs() < (t + 1) as f64, "|S_{t}| = {} >= {}", s.abs(), t + 1);
                }
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(3, 2, 2, &mut rng);
        let seq = random_tensor(&[3, 3, 3, 2], &mut rng);
        let weights = random_tensor(&[3, 3, 3, 2], &mut rng);

        let loss = |p: &ConvLstmParams, s: &Tensor| -> f64 {
            convlstm_forward(s, p, true)
                .unwrap()
                .data()
                .iter()
                .zip(weights.data())
                .map(|(a, b)| a * b)
                .sum()
        };

        let cache = convlstm_forward_cached(&seq, &params).unwrap();
        let (grads, grad_seq) = convlstm_backward(&seq, &params, &cache, &weights).unwrap();

        let h = 1e-6;
        let tol = |fd: f64| 1e-5 * (1.0 + fd.abs());

        // Input gradient.
        for i in 0..seq.len() {
            let mut plus = seq.clone();
            plus.data_mut()[i] += h;
            let mut minus = seq.clone();
            minus.data_mut()[i] -= h;
            let fd = (loss(&params, &plus) - loss(&params, &minus)) / (2.0 * h);
            assert!((grad_seq.data()[i] - fd).abs() <= tol(fd), "seq[{i}]");
        }

        // Parameter gradients, every gate.
        type Field = (
            &'static str,
            fn(&ConvLstmParams) -> &Tensor,
            fn(&mut ConvLstmParams) -> &mut Tensor,
        );
        let fields: [Field; 8] = [
            ("w_fg", |p| &p.w_fg, |p| &mut p.w_fg),
            ("b_fg", |p| &p.b_fg, |p| &mut p.b_fg),
            ("w_in", |p| &p.w_in, |p| &mut p.w_in),
            ("b_in", |p| &p.b_in, |p| &mut p.b_in),
            ("w_s", |p| &p.w_s, |p| &mut p.w_s),
            ("b_s", |p| &p.b_s, |p| &mut p.b_s),
            ("w_out", |p| &p.w_out, |p| &mut p.w_out),
            ("b_out", |p| &p.b_out, |p| &mut p.b_out),
        ];
        for (name, get, get_mut) in fields {
            for i in 0..get(&params).len() {
                let mut plus = params.clone();
                get_mut(&mut plus).data_mut()[i] += h;
                let mut minus = params.clone();
                get_mut(&mut minus).data_mut()[i] -= h;
                let fd = (loss(&plus, &seq) - loss(&minus, &seq)) / (2.0 * h);
                let a = get(&grads).data()[i];
                assert!((a - fd).abs() <= tol(fd), "{name}[{i}]: {a} vs {fd}");
            }
        }
    }
}
