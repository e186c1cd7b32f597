//! Statistical elite-pixel labeling.
//!
//! Candidate selection is threshold-based: point-scatterer (PS) candidates
//! have low amplitude dispersion `D_A = σ_a/μ_a`, area-scatterer (DS)
//! candidates have low coherence dispersion `D_c = σ_c/μ_c`. Every DS
//! candidate is assigned to its nearest PS candidate (the Voronoi cell it
//! falls in) and accepted or rejected by an F test on the ratio of amplitude
//! variances. The final elite set is all PS candidates plus the accepted DS
//! candidates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdist::f_critical;
use crate::stack::{EliteMask, InterferogramStack};

/// Per-pixel temporal statistics of one band: sample mean, sample standard
/// deviation (divisor `n−1`), and their ratio (the dispersion index).
/// Pixels whose mean is zero carry `valid = false` instead of a division
/// fault.
#[derive(Debug, Clone, PartialEq)]
pub struct BandDispersion {
    pub height: usize,
    pub width: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Both dispersion maps of a stack (amplitude and coherence bands).
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionMaps {
    pub amplitude: BandDispersion,
    pub coherence: BandDispersion,
}

impl DispersionMaps {
    pub fn compute(stack: &InterferogramStack) -> Result<Self> {
        Ok(Self {
            amplitude: amplitude_dispersion(stack)?,
            coherence: coherence_dispersion(stack)?,
        })
    }
}

/// Two-pass mean / sample standard deviation over one band, accumulated at
/// 64-bit precision.
fn band_dispersion(band: &[f32], n_t: usize, height: usize, width: usize) -> BandDispersion {
    let plane = height * width;
    let mut mu = vec![0.0; plane];
    let mut sigma = vec![0.0; plane];
    let mut dispersion = vec![0.0; plane];
    let mut valid = vec![false; plane];
    for p in 0..plane {
        let mut sum = 0.0;
        for t in 0..n_t {
            sum += f64::from(band[t * plane + p]);
        }
        let mean = sum / n_t as f64;
        let mut ss = 0.0;
        for t in 0..n_t {
            let d = f64::from(band[t * plane + p]) - mean;
            ss += d * d;
        }
        let sd = (ss / (n_t - 1) as f64).sqrt();
        mu[p] = mean;
        sigma[p] = sd;
        if mean > 0.0 {
            dispersion[p] = sd / mean;
            valid[p] = true;
        }
    }
    BandDispersion {
        height,
        width,
        mu,
        sigma,
        dispersion,
        valid,
    }
}

/// Amplitude dispersion `D_A = σ_a / μ_a` per pixel.
pub fn amplitude_dispersion(stack: &InterferogramStack) -> Result<BandDispersion> {
    stack.validate()?;
    Ok(band_dispersion(&stack.amplitude, stack.epochs, stack.height, stack.width))
}

/// Coherence dispersion `D_c = σ_c / μ_c` per pixel.
pub fn coherence_dispersion(stack: &InterferogramStack) -> Result<BandDispersion> {
    stack.validate()?;
    Ok(band_dispersion(&stack.coherence, stack.epochs, stack.height, stack.width))
}

/// How a DS candidate's variance-ratio test is decided.
///
/// `PaperLiteral` includes a DS candidate when its F statistic exceeds the
/// upper critical value. `TwoSided` instead accepts when the statistic lies
/// between the symmetric `α/2` quantiles, i.e. when the two variances are
/// statistically similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    PaperLiteral,
    TwoSided,
}

/// Thresholds and test configuration for the labeler.
///
/// Voronoi ties are always broken toward the PS candidate with the lowest
/// linear index (`row·w + col`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    /// PS candidates satisfy `D_A < ps_threshold`.
    pub ps_threshold: f64,
    /// DS candidates satisfy `D_c < ds_threshold`.
    pub ds_threshold: f64,
    /// Significance level of the variance-ratio test.
    pub alpha: f64,
    pub rule: AcceptanceRule,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            ps_threshold: 0.25,
            ds_threshold: 0.5,
            alpha: 0.05,
            rule: AcceptanceRule::PaperLiteral,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ps_threshold > 0.0 && self.ds_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "selector thresholds must be positive, got ps={}, ds={}",
                self.ps_threshold, self.ds_threshold
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// PS and DS candidate pixels as ascending linear indices. The sets are
/// disjoint: a pixel qualifying for both is PS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    pub ps: Vec<usize>,
    pub ds: Vec<usize>,
}

pub fn select_candidates(maps: &DispersionMaps, cfg: &SelectorConfig) -> Result<CandidateSets> {
    cfg.validate()?;
    let amp = &maps.amplitude;
    let coh = &maps.coherence;
    if amp.height != coh.height || amp.width != coh.width {
        return Err(Error::ShapeMismatch(format!(
            "dispersion maps disagree: {}x{} vs {}x{}",
            amp.height, amp.width, coh.height, coh.width
        )));
    }
    let mut ps = Vec::new();
    let mut ds = Vec::new();
    for p in 0..amp.height * amp.width {
        if amp.valid[p] && amp.dispersion[p] < cfg.ps_threshold {
            ps.push(p);
        } else if coh.valid[p] && coh.dispersion[p] < cfg.ds_threshold {
            ds.push(p);
        }
    }
    Ok(CandidateSets { ps, ds })
}

const GRID_CELL: usize = 32;

/// Assigns every DS candidate to its nearest PS candidate by Euclidean pixel
/// distance, ties broken toward the lowest PS linear index. Returns, per DS
/// point, the linear index of the owning PS point. Exact: distances compare
/// as integers, and the result matches an exhaustive scan.
pub fn voronoi_assign(ps: &[usize], ds: &[usize], height: usize, width: usize) -> Result<Vec<usize>> {
    if ps.is_empty() {
        return Err(Error::EmptyPsSet);
    }
    let cells_x = width.div_ceil(GRID_CELL);
    let cells_y = height.div_ceil(GRID_CELL);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells_x * cells_y];
    for &p in ps {
        let (r, c) = (p / width, p % width);
        buckets[(r / GRID_CELL) * cells_x + c / GRID_CELL].push(p);
    }
    for bucket in &mut buckets {
        bucket.sort_unstable();
    }

    let assign_one = |&d: &usize| -> usize {
        let (dr, dc) = (d / width, d % width);
        let (gr, gc) = (dr / GRID_CELL, dc / GRID_CELL);
        let mut best_d2 = u64::MAX;
        let mut best_idx = usize::MAX;
        let max_ring = cells_x.max(cells_y);
        for ring in 0..=max_ring {
            // Any pixel in a cell at Chebyshev cell-distance `ring` is at
            // least (ring−1)·cell + 1 pixels away, so once the best match
            // beats that bound no further ring can improve it.
            if best_idx != usize::MAX && ring >= 1 {
                let lb = ((ring - 1) * GRID_CELL + 1) as u64;
                if lb * lb > best_d2 {
                    break;
                }
            }
            let r_lo = gr.saturating_sub(ring);
            let r_hi = (gr + ring).min(cells_y - 1);
            let c_lo = gc.saturating_sub(ring);
            let c_hi = (gc + ring).min(cells_x - 1);
            for cr in r_lo..=r_hi {
                for cc in c_lo..=c_hi {
                    let on_ring = cr.abs_diff(gr) == ring || cc.abs_diff(gc) == ring;
                    if !on_ring {
                        continue;
                    }
                    // Closest possible pixel of this cell to the query.
                    let cell_r0 = cr * GRID_CELL;
                    let cell_c0 = cc * GRID_CELL;
                    let nr = dr.clamp(cell_r0, cell_r0 + GRID_CELL - 1);
                    let nc = dc.clamp(cell_c0, cell_c0 + GRID_CELL - 1);
                    let min_d2 = dist2(dr, dc, nr, nc);
                    if min_d2 > best_d2 {
                        continue;
                    }
                    for &p in &buckets[cr * cells_x + cc] {
                        let (pr, pc) = (p / width, p % width);
                        let d2 = dist2(dr, dc, pr, pc);
                        if d2 < best_d2 || (d2 == best_d2 && p < best_idx) {
                            best_d2 = d2;
                            best_idx = p;
                        }
                    }
                }
            }
        }
        best_idx
    };

    Ok(ds.par_iter().map(assign_one).collect())
}

#[inline]
fn dist2(r0: usize, c0: usize, r1: usize, c1: usize) -> u64 {
    let dr = r0.abs_diff(r1) as u64;
    let dc = c0.abs_diff(c1) as u64;
    dr * dr + dc * dc
}

/// Outcome of the variance-ratio test for one DS candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherOutcome {
    /// Variance ratio `(σ_DS / σ_PS)²`, the tested statistic.
    pub statistic: f64,
    /// Raw standard-deviation ratio, kept for inspection.
    pub ratio: f64,
    /// Upper critical value at the configured significance.
    pub critical: f64,
    /// Lower critical value (two-sided rule only).
    pub lower_critical: Option<f64>,
    pub accepted: bool,
    pub dof: (u64, u64),
    /// Set when `σ_PS` is zero and no ratio exists; the pixel is rejected.
    pub degenerate: bool,
}

/// Critical values for a fixed `(alpha, dof, rule)`, computed once and
/// shared across the per-pixel tests of a scene.
#[derive(Debug, Clone, Copy)]
struct CriticalValues {
    upper: f64,
    lower: Option<f64>,
}

fn critical_values(cfg: &SelectorConfig, dof: u64) -> Result<CriticalValues> {
    match cfg.rule {
        AcceptanceRule::PaperLiteral => Ok(CriticalValues {
            upper: f_critical(cfg.alpha, dof, dof)?,
            lower: None,
        }),
        AcceptanceRule::TwoSided => Ok(CriticalValues {
            upper: f_critical(cfg.alpha / 2.0, dof, dof)?,
            lower: Some(f_critical(1.0 - cfg.alpha / 2.0, dof, dof)?),
        }),
    }
}

fn fisher_outcome(sigma_ps: f64, sigma_ds: f64, dof: u64, crit: CriticalValues) -> FisherOutcome {
    if sigma_ps <= 0.0 || !sigma_ps.is_finite() {
        return FisherOutcome {
            statistic: f64::INFINITY,
            ratio: f64::INFINITY,
            critical: crit.upper,
            lower_critical: crit.lower,
            accepted: false,
            dof: (dof, dof),
            degenerate: true,
        };
    }
    let ratio = sigma_ds / sigma_ps;
    let statistic = ratio * ratio;
    let accepted = match crit.lower {
        None => statistic > crit.upper,
        Some(lower) => statistic >= lower && statistic <= crit.upper,
    };
    FisherOutcome {
        statistic,
        ratio,
        critical: crit.upper,
        lower_critical: crit.lower,
        accepted,
        dof: (dof, dof),
        degenerate: false,
    }
}

/// Variance-ratio test of one DS candidate against its owning PS candidate.
/// The statistic is the squared standard-deviation ratio with `n_t − 1`
/// degrees of freedom on both sides.
pub fn fisher_test(sigma_ps: f64, sigma_ds: f64, n_t: usize, cfg: &SelectorConfig) -> Result<FisherOutcome> {
    cfg.validate()?;
    if n_t < 2 {
        return Err(Error::InvalidConfig(format!("fisher test needs n_t >= 2, got {n_t}")));
    }
    if !sigma_ds.is_finite() || sigma_ds < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "sigma_ds must be a finite nonnegative value, got {sigma_ds}"
        )));
    }
    let dof = (n_t - 1) as u64;
    Ok(fisher_outcome(sigma_ps, sigma_ds, dof, critical_values(cfg, dof)?))
}

/// Full labeling result: the elite mask plus selection bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub mask: EliteMask,
    pub ps_count: usize,
    pub ds_candidates: usize,
    pub ds_accepted: usize,
    /// True when no pixel passed the PS threshold; the elite set is empty
    /// and callers should warn.
    pub empty_ps: bool,
}

/// Labels every pixel of a stack: elite = PS candidates ∪ accepted DS
/// candidates. Deterministic; equals a per-pixel brute-force recomputation.
pub fn elite_labels(stack: &InterferogramStack, cfg: &SelectorConfig) -> Result<Selection> {
    cfg.validate()?;
    let maps = DispersionMaps::compute(stack)?;
    let candidates = select_candidates(&maps, cfg)?;
    let mut mask = EliteMask::blank(stack.height, stack.width);

    if candidates.ps.is_empty() {
        return Ok(Selection {
            mask,
            ps_count: 0,
            ds_candidates: candidates.ds.len(),
            ds_accepted: 0,
            empty_ps: true,
        });
    }

    for &p in &candidates.ps {
        mask.elite[p] = true;
    }

    let mut ds_accepted = 0;
    if !candidates.ds.is_empty() {
        let owners = voronoi_assign(&candidates.ps, &candidates.ds, stack.height, stack.width)?;
        let dof = (stack.epochs - 1) as u64;
        let crit = critical_values(cfg, dof)?;
        for (&d, &owner) in candidates.ds.iter().zip(&owners) {
            let outcome = fisher_outcome(maps.amplitude.sigma[owner], maps.amplitude.sigma[d], dof, crit);
            if outcome.accepted {
                mask.elite[d] = true;
                ds_accepted += 1;
            }
        }
    }

    Ok(Selection {
        mask,
        ps_count: candidates.ps.len(),
        ds_candidates: candidates.ds.len(),
        ds_accepted,
        empty_ps: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, quadrant_scene, PixelClass, SceneSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack_with_amplitude(series: &[&[f32]]) -> InterferogramStack {
        // One pixel per series entry, laid out in a single row.
        let n_t = series[0].len();
        let w = series.len();
        let mut s = InterferogramStack::zeros(n_t, 1, w).unwrap();
        for (p, pix) in series.iter().enumerate() {
            for (t, &v) in pix.iter().enumerate() {
                s.amplitude[t * w + p] = v;
                s.coherence[t * w + p] = 0.5;
            }
        }
        s
    }

    #[test]
    fn amplitude_dispersion_direct_formula() {
        let s = stack_with_amplitude(&[&[3.0, 4.0, 5.0]]);
        let d = amplitude_dispersion(&s).unwrap();
        // mean 4, sample std 1 → D_A = 0.25, all exact in f64
        assert_eq!(d.mu[0], 4.0);
        assert_eq!(d.sigma[0], 1.0);
        assert_eq!(d.dispersion[0], 0.25);
        assert!(d.valid[0]);
    }

    #[test]
    fn constant_and_zero_series() {
        let s = stack_with_amplitude(&[&[7.0, 7.0, 7.0], &[0.0, 0.0, 0.0]]);
        let d = amplitude_dispersion(&s).unwrap();
        assert_eq!(d.dispersion[0], 0.0);
        assert!(d.valid[0]);
        assert!(!d.valid[1], "all-zero series must flag invalid, not fault");
    }

    #[test]
    fn coherence_dispersion_direct_formula() {
        let mut s = InterferogramStack::zeros(3, 1, 1).unwrap();
        s.coherence = vec![0.6, 0.8, 1.0];
        let d = coherence_dispersion(&s).unwrap();
        assert!((d.mu[0] - 0.8).abs() < 1e-7);
        assert!((d.dispersion[0] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn candidate_selection_rules() {
        let cfg = SelectorConfig::default();
        let mk = |d_a: f64, d_c: f64| DispersionMaps {
            amplitude: BandDispersion {
                height: 1,
                width: 2,
                mu: vec![1.0; 2],
                sigma: vec![d_a; 2],
                dispersion: vec![d_a; 2],
                valid: vec![true; 2],
            },
            coherence: BandDispersion {
                height: 1,
                width: 2,
                mu: vec![1.0; 2],
                sigma: vec![d_c; 2],
                dispersion: vec![d_c; 2],
                valid: vec![true; 2],
            },
        };
        // Zero D_A everywhere → every pixel PS.
        let sets = select_candidates(&mk(0.0, 0.0), &cfg).unwrap();
        assert_eq!(sets.ps, vec![0, 1]);
        assert!(sets.ds.is_empty());
        // D_A just over threshold, D_c zero → every pixel DS.
        let sets = select_candidates(&mk(0.2500001, 0.0), &cfg).unwrap();
        assert!(sets.ps.is_empty());
        assert_eq!(sets.ds, vec![0, 1]);
    }

    #[test]
    fn ps_and_ds_are_disjoint_on_a_mixed_scene() {
        let (stack, _) = generate_scene(&quadrant_scene(24, 24, 12, 5)).unwrap();
        let maps = DispersionMaps::compute(&stack).unwrap();
        let sets = select_candidates(&maps, &SelectorConfig::default()).unwrap();
        for p in &sets.ps {
            assert!(!sets.ds.contains(p));
        }
    }

    #[test]
    fn single_ps_owns_everything() {
        let owners = voronoi_assign(&[12], &[0, 5, 24], 5, 5).unwrap();
        assert_eq!(owners, vec![12, 12, 12]);
    }

    #[test]
    fn ties_break_to_lowest_linear_index() {
        // PS at linear indices 5 and 9 in a 1x15 strip; DS at 7 is equidistant.
        let owners = voronoi_assign(&[5, 9], &[7], 1, 15).unwrap();
        assert_eq!(owners, vec![5]);
    }

    #[test]
    fn grid_assignment_matches_exhaustive_scan() {
        let (h, w) = (90, 130);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pool: Vec<usize> = (0..h * w).collect();
        // Fisher-Yates prefix shuffle for distinct points.
        for i in 0..550.min(pool.len()) {
            let j = i + rng.gen_range(0..pool.len() - i);
            pool.swap(i, j);
        }
        let ps: Vec<usize> = {
            let mut v = pool[..50].to_vec();
            v.sort_unstable();
            v
        };
        let ds: Vec<usize> = {
            let mut v = pool[50..550].to_vec();
            v.sort_unstable();
            v
        };
        let fast = voronoi_assign(&ps, &ds, h, w).unwrap();
        for (i, &d) in ds.iter().enumerate() {
            let (dr, dc) = (d / w, d % w);
            let mut best = (u64::MAX, usize::MAX);
            for &p in &ps {
                let d2 = dist2(dr, dc, p / w, p % w);
                if (d2, p) < best {
                    best = (d2, p);
                }
            }
            assert_eq!(fast[i], best.1, "ds point {d}");
        }
    }

    #[test]
    fn empty_ps_set_is_an_error_for_assignment() {
        assert!(matches!(voronoi_assign(&[], &[3], 2, 2), Err(Error::EmptyPsSet)));
    }

    #[test]
    fn fisher_statistic_is_squared_ratio() {
        let cfg = SelectorConfig::default();
        let same = fisher_test(1.0, 1.0, 30, &cfg).unwrap();
        assert_eq!(same.statistic, 1.0);
        assert_eq!(same.ratio, 1.0);
        let four = fisher_test(1.0, 2.0, 30, &cfg).unwrap();
        assert_eq!(four.statistic, 4.0);
        assert_eq!(four.dof, (29, 29));
    }

    #[test]
    fn two_sided_accepts_unit_ratio() {
        for alpha in [0.01, 0.05, 0.2, 0.49] {
            let cfg = SelectorConfig {
                rule: AcceptanceRule::TwoSided,
                alpha,
                ..SelectorConfig::default()
            };
            let out = fisher_test(1.0, 1.0, 20, &cfg).unwrap();
            assert!(out.accepted, "alpha = {alpha}");
            assert!(out.lower_critical.unwrap() < 1.0);
            assert!(out.critical > 1.0);
        }
    }

    #[test]
    fn paper_literal_accepts_only_larger_variance() {
        let cfg = SelectorConfig::default();
        // F(29,29) upper 5% critical is ≈ 1.86: ratio 2 → F=4 accepted,
        // ratio 1 → rejected.
        assert!(fisher_test(1.0, 2.0, 30, &cfg).unwrap().accepted);
        assert!(!fisher_test(1.0, 1.0, 30, &cfg).unwrap().accepted);
    }

    #[test]
    fn degenerate_sigma_ps_is_rejected_with_flag() {
        let out = fisher_test(0.0, 1.0, 10, &SelectorConfig::default()).unwrap();
        assert!(out.degenerate);
        assert!(!out.accepted);
    }

    #[test]
    fn zero_noise_ps_scene_is_all_elite() {
        let mut spec = SceneSpec::uniform(8, 8, 5, 2, PixelClass::Ps);
        spec.params.ps.amp_jitter = 0.0;
        spec.params.ps.phase_noise_std = 0.0;
        let (stack, _) = generate_scene(&spec).unwrap();
        let sel = elite_labels(&stack, &SelectorConfig::default()).unwrap();
        assert!(sel.mask.elite.iter().all(|&e| e));
        assert_eq!(sel.ps_count, 64);
        assert!(!sel.empty_ps);
    }

    #[test]
    fn no_ps_scene_yields_empty_mask_and_warning() {
        // Decorrelated-only scene: nothing passes the PS threshold.
        let spec = SceneSpec::uniform(8, 8, 12, 3, PixelClass::Decorrelated);
        let (stack, _) = generate_scene(&spec).unwrap();
        let sel = elite_labels(&stack, &SelectorConfig::default()).unwrap();
        assert!(sel.empty_ps);
        assert_eq!(sel.mask.elite_count(), 0);
    }

    #[test]
    fn candidate_set_containment_invariants() {
        let (stack, _) = generate_scene(&quadrant_scene(30, 30, 15, 7)).unwrap();
        let cfg = SelectorConfig::default();
        let maps = DispersionMaps::compute(&stack).unwrap();
        let sets = select_candidates(&maps, &cfg).unwrap();
        let sel = elite_labels(&stack, &cfg).unwrap();
        // PS ⊆ elite ⊆ PS ∪ DS.
        for &p in &sets.ps {
            assert!(sel.mask.elite[p]);
        }
        for p in 0..900 {
            if sel.mask.elite[p] {
                assert!(sets.ps.contains(&p) || sets.ds.contains(&p));
            }
        }
        assert_eq!(sel.ps_count + sel.ds_accepted, sel.mask.elite_count());
    }

    #[test]
    fn two_sided_rule_changes_the_accepted_set() {
        // One PS pixel (μ=100, σ=8) and one DS pixel with the *same* σ but a
        // small mean (μ=20 → D_A = 0.4, so not a PS candidate). The variance
        // ratio is exactly 1: statistically similar, so the two-sided rule
        // accepts it while the upper-tail rule rejects it.
        let mut s = InterferogramStack::zeros(3, 1, 2).unwrap();
        s.amplitude = vec![92.0, 12.0, 100.0, 20.0, 108.0, 28.0];
        s.coherence = vec![0.7; 6];

        let literal = elite_labels(&s, &SelectorConfig::default()).unwrap();
        assert_eq!(literal.ps_count, 1);
        assert_eq!(literal.ds_candidates, 1);
        assert_eq!(literal.ds_accepted, 0);
        assert!(!literal.mask.elite[1]);

        let two_sided = SelectorConfig {
            rule: AcceptanceRule::TwoSided,
            ..SelectorConfig::default()
        };
        let similar = elite_labels(&s, &two_sided).unwrap();
        assert_eq!(similar.ds_accepted, 1);
        assert!(similar.mask.elite[1]);
    }

    #[test]
    fn amplitude_scaling_by_power_of_two_is_invariant() {
        let (stack, _) = generate_scene(&quadrant_scene(20, 20, 10, 13)).unwrap();
        let cfg = SelectorConfig::default();
        let base = elite_labels(&stack, &cfg).unwrap();
        let base_d = amplitude_dispersion(&stack).unwrap();

        let mut scaled = stack.clone();
        for a in &mut scaled.amplitude {
            *a *= 4.0;
        }
        let scaled_sel = elite_labels(&scaled, &cfg).unwrap();
        let scaled_d = amplitude_dispersion(&scaled).unwrap();

        // Power-of-two scaling is exact in both f32 and f64, so the
        // dispersion index and the final mask are bit-identical.
        assert_eq!(base_d.dispersion, scaled_d.dispersion);
        assert_eq!(base.mask, scaled_sel.mask);
    }
}
