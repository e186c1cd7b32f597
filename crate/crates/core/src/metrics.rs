//! Hard-count evaluation: confusion matrix over the elite class, the four
//! derived scores, and pixel densities.
//!
//! Scores are computed at full precision and *reported* truncated toward
//! zero at two decimals, which is the rounding that reproduces the reference
//! result tables digit-for-digit.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stack::EliteMask;

/// Pixel counts with elite as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Counts prediction against truth over pixels valid in both masks.
pub fn confusion(pred: &EliteMask, truth: &EliteMask) -> Result<ConfusionCounts> {
    pred.validate()?;
    truth.validate()?;
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::ShapeMismatch(format!(
            "mask shapes disagree: {}x{} vs {}x{}",
            pred.height, pred.width, truth.height, truth.width
        )));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for i in 0..pred.elite.len() {
        if !(pred.valid[i] && truth.valid[i]) {
            continue;
        }
        match (pred.elite[i], truth.elite[i]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// The four scores as full-precision percentages, with flags marking
/// degenerate (zero-denominator) entries that were defined to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
}

impl Scores {
    /// The reported form: every percentage truncated to two decimals.
    pub fn truncated(&self) -> Scores {
        Scores {
            accuracy: truncate_2dp(self.accuracy),
            precision: truncate_2dp(self.precision),
            recall: truncate_2dp(self.recall),
            f1: truncate_2dp(self.f1),
            ..*self
        }
    }
}

/// Truncates a percentage toward zero at two decimals (e.g. 98.2258 → 98.22).
pub fn truncate_2dp(pct: f64) -> f64 {
    (pct * 100.0).trunc() / 100.0
}

/// Accuracy, precision, recall, and F1 (harmonic mean) on the elite class,
/// as percentages. Zero-denominator scores are defined to 0 and flagged.
pub fn scores(c: &ConfusionCounts) -> Result<Scores> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidConfig("confusion counts are all zero".into()));
    }
    let accuracy = 100.0 * (c.tp + c.tn) as f64 / total as f64;
    let (precision, precision_degenerate) = if c.tp + c.fp == 0 {
        (0.0, true)
    } else {
        (100.0 * c.tp as f64 / (c.tp + c.fp) as f64, false)
    };
    let (recall, recall_degenerate) = if c.tp + c.fn_ == 0 {
        (0.0, true)
    } else {
        (100.0 * c.tp as f64 / (c.tp + c.fn_) as f64, false)
    };
    let (f1, f1_degenerate) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    Ok(Scores {
        accuracy,
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        f1_degenerate,
    })
}

/// Percentage of valid pixels marked elite (full precision; truncate with
/// [`truncate_2dp`] for reporting).
pub fn pixel_density(mask: &EliteMask) -> Result<f64> {
    mask.validate()?;
    let valid = mask.valid_count();
    if valid == 0 {
        return Err(Error::InvalidMask("density needs at least one valid pixel".into()));
    }
    Ok(100.0 * mask.elite_count() as f64 / valid as f64)
}

/// Evaluation report emitted by the CLI: counts, reported (2-decimal)
/// scores, and the densities of both masks.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub counts: ConfusionCounts,
    pub scores: Scores,
    pub density_pred: f64,
    pub density_truth: f64,
}

pub fn evaluate_masks(pred: &EliteMask, truth: &EliteMask) -> Result<EvaluationReport> {
    let counts = confusion(pred, truth)?;
    let s = scores(&counts)?;
    Ok(EvaluationReport {
        counts,
        scores: s.truncated(),
        density_pred: truncate_2dp(pixel_density(pred)?),
        density_truth: truncate_2dp(pixel_density(truth)?),
    })
}

impl EvaluationReport {
    /// One metric per row, ready for bar-chart plotting.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\naccuracy,{:.2}\nprecision,{:.2}\nrecall,{:.2}\nf1,{:.2}\ndensity_pred,{:.2}\ndensity_truth,{:.2}\n",
            self.scores.accuracy,
            self.scores.precision,
            self.scores.recall,
            self.scores.f1,
            self.density_pred,
            self.density_truth
        )
    }
}
