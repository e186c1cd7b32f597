//! Patch tiling, stitching, temporal sampling, and feature encoding.
//!
//! Stacks are tiled into non-overlapping `100×100` patches starting at
//! `(0, 0)`, row-major over the tile grid. Edge patches are zero-padded and
//! carry `valid = false` in the padding, so padded pixels never contribute to
//! training loss or stitched outputs, and `extract → reassemble` is exact.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::stack::{EliteMask, InterferogramStack};

/// Patch edge length in pixels.
pub const TILE: usize = 100;

/// Which feature planes are fed to the network per epoch.
///
/// Wrapped phase is encoded on the unit circle as `(cos φ, sin φ)` to avoid
/// the 2π discontinuity. The optional third plane is amplitude normalized by
/// the scalar mean of the stack's whole amplitude band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    #[default]
    PhaseCosSin,
    PhaseCosSinAmplitude,
}

impl FeatureEncoding {
    pub fn feature_count(self) -> usize {
        match self {
            FeatureEncoding::PhaseCosSin => 2,
            FeatureEncoding::PhaseCosSinAmplitude => 3,
        }
    }
}

/// A batch of fixed-size patches cut from one stack, with enough bookkeeping
/// to stitch per-pixel outputs back to the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub samples: usize,
    pub epochs: usize,
    /// Patch height (the tile size).
    pub height: usize,
    /// Patch width (the tile size).
    pub width: usize,
    pub features: usize,
    /// `(samples, epochs, height, width, features)`.
    pub data: Tensor,
    /// Per-sample `(row, col)` offset in the source stack; always a multiple
    /// of the tile stride.
    pub origins: Vec<(usize, usize)>,
    /// `(samples, height, width)` row-major; `false` exactly where the patch
    /// extends past the source boundary.
    pub valid: Vec<bool>,
}

/// Encodes a stack into per-epoch feature planes, shape `(n_t, h, w, f)`.
pub fn phase_to_features(stack: &InterferogramStack, encoding: FeatureEncoding) -> Result<Tensor> {
    stack.validate()?;
    let (n_t, h, w) = (stack.epochs, stack.height, stack.width);
    let f = encoding.feature_count();
    let mut out = Tensor::zeros(&[n_t, h, w, f]);
    let amp_scale = match encoding {
        FeatureEncoding::PhaseCosSin => 0.0,
        FeatureEncoding::PhaseCosSinAmplitude => {
            let sum: f64 = stack.amplitude.iter().map(|&a| f64::from(a)).sum();
            let mean = sum / stack.amplitude.len() as f64;
            // An all-zero amplitude band normalizes to zeros rather than NaN.
            if mean > 0.0 {
                1.0 / mean
            } else {
                0.0
            }
        }
    };
    let data = out.data_mut();
    for i in 0..n_t * h * w {
        let phi = f64::from(stack.phase[i]);
        data[i * f] = phi.cos();
        data[i * f + 1] = phi.sin();
        if f == 3 {
            data[i * f + 2] = f64::from(stack.amplitude[i]) * amp_scale;
        }
    }
    Ok(out)
}

fn tile_grid(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(TILE), w.div_ceil(TILE))
}

/// Row-major origins of the tiling that covers an `h × w` grid.
pub fn tile_origins(h: usize, w: usize) -> Vec<(usize, usize)> {
    let (rows, cols) = tile_grid(h, w);
    let mut origins = Vec::with_capacity(rows * cols);
    for tr in 0..rows {
        for tc in 0..cols {
            origins.push((tr * TILE, tc * TILE));
        }
    }
    origins
}

fn check_origins(origins: &[(usize, usize)], target_h: usize, target_w: usize) -> Result<()> {
    let expected = tile_origins(target_h, target_w);
    let mut seen = origins.to_vec();
    seen.sort_unstable();
    for pair in seen.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::TileStructure(format!(
                "duplicated tile origin {:?}",
                pair[0]
            )));
        }
    }
    let mut want = expected.clone();
    want.sort_unstable();
    if seen != want {
        for o in &want {
            if !seen.contains(o) {
                return Err(Error::TileStructure(format!("missing tile at origin {o:?}")));
            }
        }
        for o in &seen {
            if !want.contains(o) {
                return Err(Error::TileStructure(format!(
                    "unexpected tile origin {o:?} for a {target_h}x{target_w} target"
                )));
            }
        }
    }
    Ok(())
}

/// Tiles a stack into feature patches: non-overlapping stride-100 tiling
/// starting at `(0, 0)`, sample order row-major over the tile grid, edge
/// tiles zero-padded with `valid = false` in the padding.
pub fn extract_patches(stack: &InterferogramStack, encoding: FeatureEncoding) -> Result<PatchBatch> {
    let features = phase_to_features(stack, encoding)?;
    let (n_t, h, w) = (stack.epochs, stack.height, stack.width);
    let f = encoding.feature_count();
    let origins = tile_origins(h, w);
    let n_s = origins.len();

    let mut data = Tensor::zeros(&[n_s, n_t, TILE, TILE, f]);
    let mut valid = vec![false; n_s * TILE * TILE];
    let src = features.data();
    let dst = data.data_mut();
    for (s, &(or, oc)) in origins.iter().enumerate() {
        let rows = TILE.min(h - or);
        let cols = TILE.min(w - oc);
        for t in 0..n_t {
            for pr in 0..rows {
                let src_base = ((t * h + or + pr) * w + oc) * f;
                let dst_base = (((s * n_t + t) * TILE + pr) * TILE) * f;
                dst[dst_base..dst_base + cols * f]
                    .copy_from_slice(&src[src_base..src_base + cols * f]);
            }
        }
        for pr in 0..rows {
            let base = (s * TILE + pr) * TILE;
            valid[base..base + cols].fill(true);
        }
    }

    Ok(PatchBatch {
        samples: n_s,
        epochs: n_t,
        height: TILE,
        width: TILE,
        features: f,
        data,
        origins,
        valid,
    })
}

/// Inverse of [`extract_patches`]: writes every valid pixel back to its
/// origin-offset location and discards padding. Returns the feature planes
/// `(n_t, target_h, target_w, f)`.
pub fn reassemble_patches(batch: &PatchBatch, target_h: usize, target_w: usize) -> Result<Tensor> {
    if batch.height != TILE || batch.width != TILE {
        return Err(Error::TileStructure(format!(
            "patch size {}x{} does not match the {TILE}-pixel tiling",
            batch.height, batch.width
        )));
    }
    check_origins(&batch.origins, target_h, target_w)?;
    let (n_t, f) = (batch.epochs, batch.features);
    let mut out = Tensor::zeros(&[n_t, target_h, target_w, f]);
    let src = batch.data.data();
    let dst = out.data_mut();
    for (s, &(or, oc)) in batch.origins.iter().enumerate() {
        let rows = batch.height.min(target_h - or);
        let cols = batch.width.min(target_w - oc);
        for t in 0..n_t {
            for pr in 0..rows {
                let src_base = (((s * n_t + t) * batch.height + pr) * batch.width) * f;
                let dst_base = ((t * target_h + or + pr) * target_w + oc) * f;
                dst[dst_base..dst_base + cols * f]
                    .copy_from_slice(&src[src_base..src_base + cols * f]);
            }
        }
    }
    Ok(out)
}

/// Stitches per-sample scalar tiles `(n_s, tile_h, tile_w)` back into a full
/// `target_h × target_w` plane, discarding padded pixels.
pub fn stitch_scalar_tiles(
    tiles: &Tensor,
    origins: &[(usize, usize)],
    target_h: usize,
    target_w: usize,
) -> Result<Vec<f64>> {
    let shape = tiles.shape();
    if shape.len() != 3 || shape[0] != origins.len() {
        return Err(Error::ShapeMismatch(format!(
            "scalar tiles have shape {shape:?}, expected ({}, tile, tile)",
            origins.len()
        )));
    }
    check_origins(origins, target_h, target_w)?;
    let (th, tw) = (shape[1], shape[2]);
    let src = tiles.data();
    let mut out = vec![0.0; target_h * target_w];
    for (s, &(or, oc)) in origins.iter().enumerate() {
        let rows = th.min(target_h - or);
        let cols = tw.min(target_w - oc);
        for pr in 0..rows {
            let src_base = (s * th + pr) * tw;
            let dst_base = (or + pr) * target_w + oc;
            out[dst_base..dst_base + cols].copy_from_slice(&src[src_base..src_base + cols]);
        }
    }
    Ok(out)
}

/// Mask tiles: per-pixel targets `(n_s, TILE, TILE)`, their combined
/// validity, and the tile origins.
pub type MaskPatches = (Tensor, Vec<bool>, Vec<(usize, usize)>);

/// Tiles a truth mask on the same grid as [`extract_patches`]. Returns
/// per-pixel targets (elite = 1.0) and a combined validity mask (inside the
/// source grid *and* valid in the mask).
pub fn extract_mask_patches(mask: &EliteMask) -> Result<MaskPatches> {
    mask.validate()?;
    let (h, w) = (mask.height, mask.width);
    let origins = tile_origins(h, w);
    let n_s = origins.len();
    let mut targets = Tensor::zeros(&[n_s, TILE, TILE]);
    let mut valid = vec![false; n_s * TILE * TILE];
    let data = targets.data_mut();
    for (s, &(or, oc)) in origins.iter().enumerate() {
        let rows = TILE.min(h - or);
        let cols = TILE.min(w - oc);
        for pr in 0..rows {
            for pc in 0..cols {
                let src = (or + pr) * w + oc + pc;
                let dst = (s * TILE + pr) * TILE + pc;
                data[dst] = f64::from(u8::from(mask.elite[src]));
                valid[dst] = mask.valid[src];
            }
        }
    }
    Ok((targets, valid, origins))
}

/// Epoch indices kept when sampling a series of `n_t` epochs down to `m`:
/// `idx_k = round(k·(n_t−1)/(m−1))` for `k = 0..m`, rounding half away from
/// zero, evaluated in exact integer arithmetic. The first and last epochs are
/// always retained and the indices are strictly increasing.
pub fn temporal_sample_indices(n_t: usize, m: usize) -> Result<Vec<usize>> {
    if m < 2 || m > n_t {
        return Err(Error::InvalidConfig(format!(
            "temporal sample count m = {m} outside [2, n_t = {n_t}]"
        )));
    }
    let span = (n_t - 1) as u64;
    let q = (m - 1) as u64;
    let indices: Vec<usize> = (0..m as u64)
        .map(|k| ((2 * k * span + q) / (2 * q)) as usize)
        .collect();
    debug_assert!(indices.windows(2).all(|p| p[0] < p[1]));
    debug_assert_eq!(indices[0], 0);
    debug_assert_eq!(*indices.last().unwrap(), n_t - 1);
    Ok(indices)
}

/// Reduces a stack to `m` epochs spread evenly over the series (see
/// [`temporal_sample_indices`] for the exact rule).
pub fn temporal_sample(stack: &InterferogramStack, m: usize) -> Result<InterferogramStack> {
    stack.validate()?;
    let indices = temporal_sample_indices(stack.epochs, m)?;
    let plane = stack.height * stack.width;
    let pick = |band: &[f32]| -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * plane);
        for &t in &indices {
            out.extend_from_slice(&band[t * plane..(t + 1) * plane]);
        }
        out
    };
    Ok(InterferogramStack {
        epochs: indices.len(),
        height: stack.height,
        width: stack.width,
        amplitude: pick(&stack.amplitude),
        phase: pick(&stack.phase),
        coherence: pick(&stack.coherence),
        meta: stack.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Stack with deterministic pseudo-random band values (no RNG needed).
    fn test_stack(n_t: usize, h: usize, w: usize) -> InterferogramStack {
        let mut s = InterferogramStack::zeros(n_t, h, w).unwrap();
        let n = n_t * h * w;
        for i in 0..n {
            let x = i as f32;
            s.amplitude[i] = 1.0 + (x * 0.37).fract() * 10.0;
            s.phase[i] = ((x * 0.11).fract() - 0.5) * 6.0; // within [-3, 3) ⊂ [-π, π)
            s.coherence[i] = (x * 0.73).fract();
        }
        s
    }

    #[test]
    fn exact_tile_gives_one_fully_valid_patch() {
        let s = test_stack(2, 100, 100);
        let b = extract_patches(&s, FeatureEncoding::PhaseCosSin).unwrap();
        assert_eq!(b.samples, 1);
        assert_eq!(b.origins, vec![(0, 0)]);
        assert!(b.valid.iter().all(|&v| v));
    }

    #[test]
    fn tiling_250_gives_nine_padded_patches() {
        let s = test_stack(2, 250, 250);
        let b = extract_patches(&s, FeatureEncoding::PhaseCosSin).unwrap();
        assert_eq!(b.samples, 9);
        let mut rows: Vec<usize> = b.origins.iter().map(|o| o.0).collect();
        rows.dedup();
        assert_eq!(rows, vec![0, 100, 200]);
        let cols: Vec<usize> = b.origins.iter().take(3).map(|o| o.1).collect();
        assert_eq!(cols, vec![0, 100, 200]);
        // Row-major order over the grid.
        assert_eq!(b.origins[0], (0, 0));
        assert_eq!(b.origins[4], (100, 100));
        assert_eq!(b.origins[8], (200, 200));
        // Tiles at offset 200 carry 50 padded rows/cols.
        let last = 8;
        let valid_rows = (0..TILE)
            .filter(|&r| b.valid[(last * TILE + r) * TILE])
            .count();
        assert_eq!(valid_rows, 50);
        let valid_cols = (0..TILE).filter(|&c| b.valid[last * TILE * TILE + c]).count();
        assert_eq!(valid_cols, 50);
        // Padding is zero-filled.
        assert_eq!(b.data.at(&[8, 0, 50, 50, 0]), 0.0);
    }

    #[test]
    fn degenerate_single_pixel_stack() {
        let s = test_stack(2, 1, 1);
        let b = extract_patches(&s, FeatureEncoding::PhaseCosSin).unwrap();
        assert_eq!(b.samples, 1);
        assert_eq!(b.valid.iter().filter(|&&v| v).count(), 1);
        assert!(b.valid[0]);
    }

    #[test]
    fn reassemble_round_trips_exactly() {
        let s = test_stack(3, 250, 250);
        let features = phase_to_features(&s, FeatureEncoding::PhaseCosSinAmplitude).unwrap();
        let b = extract_patches(&s, FeatureEncoding::PhaseCosSinAmplitude).unwrap();
        let back = reassemble_patches(&b, 250, 250).unwrap();
        assert_eq!(back, features);
    }

    #[test]
    fn missing_and_duplicate_tiles_are_structural_errors() {
        let s = test_stack(2, 150, 100);
        let mut b = extract_patches(&s, FeatureEncoding::PhaseCosSin).unwrap();
        assert_eq!(b.samples, 2);
        b.origins[1] = (0, 0); // duplicate
        assert!(matches!(
            reassemble_patches(&b, 150, 100),
            Err(Error::TileStructure(_))
        ));
        b.origins.pop();
        b.origins[0] = (0, 0);
        assert!(matches!(
            reassemble_patches(&b, 150, 100),
            Err(Error::TileStructure(_))
        ));
    }

    #[test]
    fn temporal_sampling_examples() {
        assert_eq!(temporal_sample_indices(10, 5).unwrap(), vec![0, 2, 5, 7, 9]);
        assert_eq!(temporal_sample_indices(7, 7).unwrap(), vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(temporal_sample_indices(9, 2).unwrap(), vec![0, 8]);
        assert!(temporal_sample_indices(5, 1).is_err());
        assert!(temporal_sample_indices(5, 6).is_err());
    }

    #[test]
    fn temporal_sample_keeps_selected_epochs() {
        let s = test_stack(10, 4, 3);
        let out = temporal_sample(&s, 5).unwrap();
        assert_eq!(out.epochs, 5);
        let plane = 12;
        for (k, &t) in [0usize, 2, 5, 7, 9].iter().enumerate() {
            assert_eq!(
                out.amplitude[k * plane..(k + 1) * plane],
                s.amplitude[t * plane..(t + 1) * plane]
            );
        }
    }

    #[test]
    fn phase_feature_values() {
        let mut s = InterferogramStack::zeros(2, 1, 2).unwrap();
        s.phase = vec![0.0, std::f32::consts::FRAC_PI_2, 0.0, 0.0];
        let f = phase_to_features(&s, FeatureEncoding::PhaseCosSin).unwrap();
        assert_eq!(f.at(&[0, 0, 0, 0]), 1.0);
        assert_eq!(f.at(&[0, 0, 0, 1]), 0.0);
        assert!((f.at(&[0, 0, 1, 0])).abs() < 1e-6);
        assert!((f.at(&[0, 0, 1, 1]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn amplitude_plane_uses_global_mean() {
        let mut s = InterferogramStack::zeros(2, 1, 1).unwrap();
        s.amplitude = vec![2.0, 6.0]; // mean 4
        let f = phase_to_features(&s, FeatureEncoding::PhaseCosSinAmplitude).unwrap();
        assert_eq!(f.at(&[0, 0, 0, 2]), 0.5);
        assert_eq!(f.at(&[1, 0, 0, 2]), 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn extract_reassemble_identity(h in 1usize..300, w in 1usize..300) {
            let s = test_stack(2, h, w);
            let features = phase_to_features(&s, FeatureEncoding::PhaseCosSin).unwrap();
            let b = extract_patches(&s, FeatureEncoding::PhaseCosSin).unwrap();
            let back = reassemble_patches(&b, h, w).unwrap();
            prop_assert_eq!(back, features);
        }

        #[test]
        fn sample_indices_increase_and_keep_endpoints(n_t in 2usize..200, m_off in 0usize..100) {
            let m = 2 + m_off % (n_t - 1).max(1);
            if m <= n_t {
                let idx = temporal_sample_indices(n_t, m).unwrap();
                prop_assert_eq!(idx.len(), m);
                prop_assert_eq!(idx[0], 0);
                prop_assert_eq!(*idx.last().unwrap(), n_t - 1);
                prop_assert!(idx.windows(2).all(|p| p[0] < p[1]));
            }
        }

        #[test]
        fn unit_circle_identity(h in 1usize..40, w in 1usize..40) {
            let s = test_stack(2, h, w);
            let f = phase_to_features(&s, FeatureEncoding::PhaseCosSin).unwrap();
            let d = f.data();
            for i in 0..(2 * h * w) {
                let (c, s) = (d[2 * i], d[2 * i + 1]);
                prop_assert!((c * c + s * s - 1.0).abs() < 1e-6);
            }
        }
    }
}
