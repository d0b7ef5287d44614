//! Cross-entropy family: plain, weighted, balanced, focal and
//! distance-map-penalized binary cross entropy.
//!
//! Every loss here clamps probabilities into `[epsilon, 1 - epsilon]`
//! before taking logs, and the clamp is part of the function being
//! differentiated: gradients vanish where the clamp is active.

use crate::config::LossConfig;
use crate::error::{param, Result};
use crate::geometry::DistanceMap;
use crate::grid::{
    check_epsilon, check_shapes, clamp_scalar, clamp_slope, GradientMap, GroundTruthMask,
    ProbabilityMap,
};

/// Probability assigned to the true class.
#[inline]
pub(crate) fn prob_true(y: bool, p: f64) -> f64 {
    if y {
        p
    } else {
        1.0 - p
    }
}

/// Per-pixel cross entropy `-ln p_t` on the clamped probability.
#[inline]
pub(crate) fn ce_term(y: bool, p: f64, epsilon: f64) -> f64 {
    -prob_true(y, clamp_scalar(p, epsilon)).ln()
}

/// `d ce_term / dp`.
#[inline]
pub(crate) fn ce_slope(y: bool, p: f64, epsilon: f64) -> f64 {
    let slope = clamp_slope(p, epsilon);
    let pc = clamp_scalar(p, epsilon);
    if y {
        -slope / pc
    } else {
        slope / (1.0 - pc)
    }
}

/// `(1 / denom) * sum_i weights_i * ce_i`, zero when `denom` is zero.
pub(crate) fn weighted_ce(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    epsilon: f64,
    weights: &[f64],
    denom: f64,
) -> f64 {
    if denom == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for ((&t, &q), &w) in y.values().iter().zip(p.values()).zip(weights) {
        acc += w * ce_term(t, q, epsilon);
    }
    acc / denom
}

pub(crate) fn weighted_ce_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    epsilon: f64,
    weights: &[f64],
    denom: f64,
) -> GradientMap {
    let values = if denom == 0.0 {
        vec![0.0; p.values().len()]
    } else {
        y.values()
            .iter()
            .zip(p.values())
            .zip(weights)
            .map(|((&t, &q), &w)| w * ce_slope(t, q, epsilon) / denom)
            .collect()
    };
    GradientMap::from_raw(p.shape(), values)
}

fn pixel_count(p: &ProbabilityMap) -> f64 {
    p.values().len() as f64
}

/// Mean of `pos_w * ce` over foreground and `neg_w * ce` over background.
pub(crate) fn class_weighted_ce(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    epsilon: f64,
    pos_w: f64,
    neg_w: f64,
) -> f64 {
    let mut acc = 0.0;
    for (&t, &q) in y.values().iter().zip(p.values()) {
        let w = if t { pos_w } else { neg_w };
        acc += w * ce_term(t, q, epsilon);
    }
    acc / pixel_count(p)
}

pub(crate) fn class_weighted_ce_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    epsilon: f64,
    pos_w: f64,
    neg_w: f64,
) -> GradientMap {
    let n = pixel_count(p);
    let values = y
        .values()
        .iter()
        .zip(p.values())
        .map(|(&t, &q)| {
            let w = if t { pos_w } else { neg_w };
            w * ce_slope(t, q, epsilon) / n
        })
        .collect();
    GradientMap::from_raw(p.shape(), values)
}

/// Binary cross entropy, averaged over pixels.
pub fn bce(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    let mut acc = 0.0;
    for (&t, &q) in y.values().iter().zip(p.values()) {
        acc += ce_term(t, q, cfg.epsilon);
    }
    Ok(acc / pixel_count(p))
}

pub fn bce_grad(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    Ok(class_weighted_ce_grad(y, p, cfg.epsilon, 1.0, 1.0))
}

fn check_positive_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(param("beta", beta, "must be > 0"))
    }
}

/// Cross entropy with foreground terms scaled by `beta`.
pub fn weighted_bce(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    check_positive_beta(cfg.beta)?;
    Ok(class_weighted_ce(y, p, cfg.epsilon, cfg.beta, 1.0))
}

pub fn weighted_bce_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    check_positive_beta(cfg.beta)?;
    Ok(class_weighted_ce_grad(y, p, cfg.epsilon, cfg.beta, 1.0))
}

/// `1 - (foreground pixels) / (H * W)`: one scalar per image.
pub fn balance_weight(y: &GroundTruthMask) -> f64 {
    1.0 - y.foreground_count() as f64 / y.values().len() as f64
}

/// Cross entropy with foreground scaled by `beta` and background by
/// `1 - beta`, where `beta` is the background fraction of `y`.
pub fn balanced_bce(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    let beta = balance_weight(y);
    Ok(class_weighted_ce(y, p, cfg.epsilon, beta, 1.0 - beta))
}

pub fn balanced_bce_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    let beta = balance_weight(y);
    Ok(class_weighted_ce_grad(y, p, cfg.epsilon, beta, 1.0 - beta))
}

fn check_focal(cfg: &LossConfig) -> Result<()> {
    check_epsilon(cfg.epsilon)?;
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(param("gamma", cfg.gamma, "must be >= 0"));
    }
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(param("alpha", cfg.alpha, "must lie in [0, 1]"));
    }
    Ok(())
}

#[inline]
fn focal_alpha(y: bool, cfg: &LossConfig) -> f64 {
    if cfg.alpha_balanced && !y {
        1.0 - cfg.alpha
    } else {
        cfg.alpha
    }
}

/// Focal loss `-a (1 - p_t)^gamma ln p_t`, averaged over pixels.
///
/// With `gamma = 0` and `alpha = 1` this is exactly [`bce`].
pub fn focal(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_focal(cfg)?;
    let mut acc = 0.0;
    for (&t, &q) in y.values().iter().zip(p.values()) {
        let pt = prob_true(t, clamp_scalar(q, cfg.epsilon));
        let modulation = (1.0 - pt).powf(cfg.gamma);
        acc += focal_alpha(t, cfg) * modulation * ce_term(t, q, cfg.epsilon);
    }
    Ok(acc / pixel_count(p))
}

pub fn focal_grad(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_focal(cfg)?;
    let n = pixel_count(p);
    let gamma = cfg.gamma;
    let values = y
        .values()
        .iter()
        .zip(p.values())
        .map(|(&t, &q)| {
            let pt = prob_true(t, clamp_scalar(q, cfg.epsilon));
            let ce = -pt.ln();
            let easy = 1.0 - pt;
            let modulation_slope = if gamma == 0.0 {
                0.0
            } else {
                -gamma * easy.powf(gamma - 1.0) * ce
            };
            // d/dp_t of -(1 - p_t)^gamma ln p_t
            let d_pt = modulation_slope - easy.powf(gamma) / pt;
            let sign = if t { 1.0 } else { -1.0 };
            focal_alpha(t, cfg) * d_pt * sign * clamp_slope(q, cfg.epsilon) / n
        })
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

fn penalty_weights(y: &GroundTruthMask, p: &ProbabilityMap, phi: &DistanceMap) -> Result<Vec<f64>> {
    check_shapes(y, p)?;
    y.shape().ensure_same(phi.shape())?;
    if let Some(i) = phi.values().iter().position(|&d| d.is_nan() || d < 0.0) {
        return Err(param("phi", phi.values()[i], "distance map values must be >= 0"));
    }
    Ok(phi.values().iter().map(|&d| 1.0 + d).collect())
}

/// `(1/N) sum (1 + phi_i) ce_i`: cross entropy penalized by a distance map.
pub fn distance_penalized_ce(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    phi: &DistanceMap,
    cfg: &LossConfig,
) -> Result<f64> {
    check_epsilon(cfg.epsilon)?;
    let weights = penalty_weights(y, p, phi)?;
    Ok(weighted_ce(y, p, cfg.epsilon, &weights, pixel_count(p)))
}

pub fn distance_penalized_ce_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    phi: &DistanceMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_epsilon(cfg.epsilon)?;
    let weights = penalty_weights(y, p, phi)?;
    Ok(weighted_ce_grad(y, p, cfg.epsilon, &weights, pixel_count(p)))
}
