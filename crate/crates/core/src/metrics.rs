//! Hard-threshold evaluation metrics.
//!
//! Empty denominators score 1.0: a prediction that agrees with an empty
//! truth is treated as perfect.

use crate::error::{param, Result};
use crate::geometry::{extract_boundary, hausdorff_distance};
use crate::grid::{GroundTruthMask, ProbabilityMap};

/// Pixel counts at a fixed binarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HardConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl HardConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn dice(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Foreground iff `p >= threshold`.
pub fn binarize(p: &ProbabilityMap, threshold: f64) -> Result<GroundTruthMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(param("threshold", threshold, "must lie in (0, 1)"));
    }
    GroundTruthMask::new(
        p.shape(),
        p.values().iter().map(|&v| v >= threshold).collect(),
    )
}

pub fn hard_confusion(pred: &GroundTruthMask, truth: &GroundTruthMask) -> Result<HardConfusion> {
    truth.shape().ensure_same(pred.shape())?;
    let mut c = HardConfusion::default();
    for (&q, &t) in pred.values().iter().zip(truth.values()) {
        match (q, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`; 1.0 when both masks are empty.
pub fn dice_coefficient(pred: &GroundTruthMask, truth: &GroundTruthMask) -> Result<f64> {
    Ok(hard_confusion(pred, truth)?.dice())
}

/// `TP / (TP + FN)`; 1.0 when the truth has no foreground.
pub fn sensitivity(pred: &GroundTruthMask, truth: &GroundTruthMask) -> Result<f64> {
    Ok(hard_confusion(pred, truth)?.sensitivity())
}

/// `TN / (TN + FP)`; 1.0 when the truth has no background.
pub fn specificity(pred: &GroundTruthMask, truth: &GroundTruthMask) -> Result<f64> {
    Ok(hard_confusion(pred, truth)?.specificity())
}

/// Symmetric Hausdorff distance between the inner boundaries of two masks,
/// or `None` when either boundary is empty.
pub fn boundary_hausdorff(pred: &GroundTruthMask, truth: &GroundTruthMask) -> Result<Option<f64>> {
    truth.shape().ensure_same(pred.shape())?;
    let a = extract_boundary(pred);
    let b = extract_boundary(truth);
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    hausdorff_distance(&a, &b).map(Some)
}
