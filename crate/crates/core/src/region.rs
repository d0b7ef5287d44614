//! Overlap-based losses: Dice, Tversky, focal Tversky,
//! sensitivity-specificity and log-cosh Dice.
//!
//! All ratios are taken over image-wide soft sums, never per pixel.

use crate::config::LossConfig;
use crate::error::{param, Result, SegLossError};
use crate::grid::{
    check_epsilon, check_shapes, soft_confusion, GradientMap, GroundTruthMask, ProbabilityMap,
};

/// Image-wide sums behind the soft Dice ratio.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DiceTerms {
    /// `2 * sum(y p) + smooth`
    pub num: f64,
    /// `sum(y) + sum(p) + smooth`
    pub den: f64,
}

impl DiceTerms {
    pub fn coefficient(&self) -> f64 {
        self.num / self.den
    }

    /// `d (num / den) / dp_i` for a pixel with label `y`.
    #[inline]
    pub fn coefficient_slope(&self, y: bool) -> f64 {
        let dnum = if y { 2.0 } else { 0.0 };
        (dnum * self.den - self.num) / (self.den * self.den)
    }
}

pub(crate) fn dice_terms(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    smooth: f64,
) -> Result<DiceTerms> {
    check_shapes(y, p)?;
    if !(smooth >= 0.0 && smooth.is_finite()) {
        return Err(param("smooth", smooth, "must be >= 0"));
    }
    let (mut overlap, mut truth, mut pred) = (0.0, 0.0, 0.0);
    for (&t, &q) in y.values().iter().zip(p.values()) {
        if t {
            overlap += q;
            truth += 1.0;
        }
        pred += q;
    }
    let den = truth + pred + smooth;
    if den == 0.0 {
        return Err(SegLossError::UndefinedDice);
    }
    Ok(DiceTerms {
        num: 2.0 * overlap + smooth,
        den,
    })
}

/// `1 - (2 sum(y p) + s) / (sum(y) + sum(p) + s)`.
pub fn dice_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    Ok(1.0 - dice_terms(y, p, cfg.smooth)?.coefficient())
}

pub fn dice_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let terms = dice_terms(y, p, cfg.smooth)?;
    let values = y
        .values()
        .iter()
        .map(|&t| -terms.coefficient_slope(t))
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

#[derive(Debug, Clone, Copy)]
struct TverskyTerms {
    num: f64,
    den: f64,
    beta: f64,
}

impl TverskyTerms {
    fn index(&self) -> f64 {
        self.num / self.den
    }

    /// `d TI / dp_i`. The denominator's slope is `beta` for every pixel.
    fn index_slope(&self, y: bool) -> f64 {
        let dnum = if y { 1.0 } else { 0.0 };
        (dnum * self.den - self.num * self.beta) / (self.den * self.den)
    }
}

fn tversky_terms(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<TverskyTerms> {
    check_shapes(y, p)?;
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(param("beta", cfg.beta, "must lie in [0, 1] for Tversky losses"));
    }
    if !(cfg.smooth >= 0.0 && cfg.smooth.is_finite()) {
        return Err(param("smooth", cfg.smooth, "must be >= 0"));
    }
    let c = soft_confusion(y, p)?;
    let num = c.tp + cfg.smooth;
    let den = c.tp + cfg.beta * c.fp + (1.0 - cfg.beta) * c.fn_ + cfg.smooth;
    if den == 0.0 {
        return Err(SegLossError::UndefinedDice);
    }
    Ok(TverskyTerms {
        num,
        den,
        beta: cfg.beta,
    })
}

/// Tversky index `(TP + s) / (TP + beta FP + (1 - beta) FN + s)` over soft
/// counts.
pub fn tversky_index(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    Ok(tversky_terms(y, p, cfg)?.index())
}

pub fn tversky_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    Ok(1.0 - tversky_index(y, p, cfg)?)
}

pub fn tversky_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let terms = tversky_terms(y, p, cfg)?;
    let values = y.values().iter().map(|&t| -terms.index_slope(t)).collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

fn check_focal_tversky_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(param("gamma", gamma, "must be > 0"));
    }
    if !(1.0..=3.0).contains(&gamma) {
        log::warn!("focal Tversky gamma = {gamma} is outside the usual [1, 3] range");
    }
    Ok(())
}

/// `(1 - TI)^gamma` for the single foreground class.
pub fn focal_tversky_loss(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<f64> {
    check_focal_tversky_gamma(cfg.gamma)?;
    let base = tversky_loss(y, p, cfg)?;
    Ok(if cfg.gamma == 1.0 {
        base
    } else {
        base.powf(cfg.gamma)
    })
}

pub fn focal_tversky_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_focal_tversky_gamma(cfg.gamma)?;
    let terms = tversky_terms(y, p, cfg)?;
    let base = 1.0 - terms.index();
    let outer = if cfg.gamma == 1.0 {
        1.0
    } else if base <= 0.0 {
        0.0
    } else {
        cfg.gamma * base.powf(cfg.gamma - 1.0)
    };
    let values = y
        .values()
        .iter()
        .map(|&t| -outer * terms.index_slope(t))
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

fn check_w(cfg: &LossConfig) -> Result<()> {
    check_epsilon(cfg.epsilon)?;
    if (0.0..=1.0).contains(&cfg.w) {
        Ok(())
    } else {
        Err(param("w", cfg.w, "must lie in [0, 1]"))
    }
}

/// `1 - (w * sensitivity + (1 - w) * specificity)` over soft counts, with
/// `epsilon` in both denominators.
pub fn sensitivity_specificity_loss(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<f64> {
    check_w(cfg)?;
    let c = soft_confusion(y, p)?;
    let sens = c.tp / (c.tp + c.fn_ + cfg.epsilon);
    let spec = c.tn / (c.tn + c.fp + cfg.epsilon);
    Ok(1.0 - (cfg.w * sens + (1.0 - cfg.w) * spec))
}

pub fn sensitivity_specificity_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_w(cfg)?;
    let c = soft_confusion(y, p)?;
    // tp + fn and tn + fp do not depend on p.
    let pos = c.tp + c.fn_ + cfg.epsilon;
    let neg = c.tn + c.fp + cfg.epsilon;
    let values = y
        .values()
        .iter()
        .map(|&t| {
            if t {
                -cfg.w / pos
            } else {
                (1.0 - cfg.w) / neg
            }
        })
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

/// `ln cosh x`, evaluated as `|x| + ln(1 + e^(-2|x|)) - ln 2`.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln cosh(dice_loss)`.
pub fn log_cosh_dice_loss(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(log_cosh(dice_loss(y, p, cfg)?))
}

/// `tanh(DL) * grad(DL)`.
pub fn log_cosh_dice_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let outer = dice_loss(y, p, cfg)?.tanh();
    let mut g = dice_loss_grad(y, p, cfg)?;
    for v in g.values_mut() {
        *v *= outer;
    }
    Ok(g)
}
