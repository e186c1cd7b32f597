//! Shared test oracles: independent straight-line reimplementations used to
//! cross-check the library's optimized paths. Everything here is written
//! directly from the definitions, without touching the implementation code
//! it validates.

#![allow(dead_code)]

use elite_pixel::nn::{ConvLstmParams, Tensor};
use elite_pixel::selector::{AcceptanceRule, SelectorConfig};
use elite_pixel::stack::InterferogramStack;
use elite_pixel::synth::{ClassParamSet, PixelClass, SceneSpec};
use statrs::distribution::ContinuousCDF;

/// Direct six-loop same-padding cross-correlation.
pub fn conv2d_naive(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
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
                            acc += input.at(&[sr as usize, sc as usize, i]) * kernel.at(&[dr, dc, i, o]);
                        }
                    }
                }
                out.set(&[r, c, o], acc);
            }
        }
    }
    out
}

/// Plain scalar LSTM over a scalar sequence; the degenerate (1×1 pixel,
/// k = 1, one channel) ConvLSTM must match it. Returns per-step hidden
/// values.
pub fn scalar_lstm(xs: &[f64], p: &ConvLstmParams) -> Vec<f64> {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let wf = (p.w_fg.data()[0], p.w_fg.data()[1]);
    let wi = (p.w_in.data()[0], p.w_in.data()[1]);
    let ws = (p.w_s.data()[0], p.w_s.data()[1]);
    let wo = (p.w_out.data()[0], p.w_out.data()[1]);
    let (bf, bi, bs, bo) = (
        p.b_fg.data()[0],
        p.b_in.data()[0],
        p.b_s.data()[0],
        p.b_out.data()[0],
    );
    let (mut y, mut s) = (0.0f64, 0.0f64);
    let mut hiddens = Vec::new();
    for &x in xs {
        let fg = sig(wf.0 * y + wf.1 * x + bf);
        let ing = sig(wi.0 * y + wi.1 * x + bi);
        let cand = (ws.0 * y + ws.1 * x + bs).tanh();
        let out = sig(wo.0 * y + wo.1 * x + bo);
        s = fg * s + ing * cand;
        y = out * s.tanh();
        hiddens.push(y);
    }
    hiddens
}

/// Straight-line reimplementation of the full statistical labeler: direct
/// mean/std loops, thresholds, exhaustive nearest-PS scan, and the
/// variance-ratio test against an independently computed F quantile.
/// Supports the default (upper-tail) acceptance rule.
pub fn selector_oracle(stack: &InterferogramStack, cfg: &SelectorConfig) -> Vec<bool> {
    assert_eq!(cfg.rule, AcceptanceRule::PaperLiteral);
    let (n_t, h, w) = (stack.epochs, stack.height, stack.width);
    let plane = h * w;

    let stats = |band: &[f32], p: usize| -> (f64, f64) {
        let mut sum = 0.0;
        for t in 0..n_t {
            sum += band[t * plane + p] as f64;
        }
        let mean = sum / n_t as f64;
        let mut ss = 0.0;
        for t in 0..n_t {
            let d = band[t * plane + p] as f64 - mean;
            ss += d * d;
        }
        (mean, (ss / (n_t as f64 - 1.0)).sqrt())
    };

    let mut ps = Vec::new();
    let mut ds = Vec::new();
    let mut sigma_a = vec![0.0; plane];
    #[allow(clippy::needless_range_loop)]
    for p in 0..plane {
        let (mu_a, sd_a) = stats(&stack.amplitude, p);
        let (mu_c, sd_c) = stats(&stack.coherence, p);
        sigma_a[p] = sd_a;
        if mu_a > 0.0 && sd_a / mu_a < cfg.ps_threshold {
            ps.push(p);
        } else if mu_c > 0.0 && sd_c / mu_c < cfg.ds_threshold {
            ds.push(p);
        }
    }

    let mut elite = vec![false; plane];
    for &p in &ps {
        elite[p] = true;
    }
    if ps.is_empty() || ds.is_empty() {
        return elite;
    }

    let dof = (n_t - 1) as f64;
    let dist = statrs::distribution::FisherSnedecor::new(dof, dof).unwrap();
    let critical = dist.inverse_cdf(1.0 - cfg.alpha);
    for &d in &ds {
        let (dr, dc) = (d / w, d % w);
        let mut best = (u64::MAX, usize::MAX);
        for &p in &ps {
            let (pr, pc) = (p / w, p % w);
            let dy = pr.abs_diff(dr) as u64;
            let dx = pc.abs_diff(dc) as u64;
            let d2 = dy * dy + dx * dx;
            if (d2, p) < best {
                best = (d2, p);
            }
        }
        let owner = best.1;
        if sigma_a[owner] > 0.0 {
            let f = (sigma_a[d] / sigma_a[owner]).powi(2);
            if f > critical {
                elite[d] = true;
            }
        }
    }
    elite
}

/// A synthetic scene whose 25-pixel vertical stripes cycle through all four
/// classes, so every 100×100 tile carries both elite and non-elite pixels in
/// equal measure.
pub fn striped_scene(height: usize, width: usize, epochs: usize, seed: u64) -> SceneSpec {
    let classes = [
        PixelClass::Ps,
        PixelClass::Ds,
        PixelClass::Decorrelated,
        PixelClass::Water,
    ];
    let mut regions = Vec::with_capacity(height * width);
    for _ in 0..height {
        for c in 0..width {
            regions.push(classes[(c / 25) % 4]);
        }
    }
    SceneSpec {
        height,
        width,
        epochs,
        seed,
        regions,
        params: ClassParamSet::frozen_defaults(),
        deformation_rate: Some(0.05),
    }
}

/// Deterministic pseudo-random tensor without an RNG dependency.
pub fn pseudo_tensor(shape: &[usize], salt: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|i| {
            let x = (i as u64)
                .wrapping_mul(6364136223846793005)
                .wrapping_add(salt.wrapping_mul(1442695040888963407));
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}
