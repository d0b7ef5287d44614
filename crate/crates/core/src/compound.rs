//! Compound losses: Combo, exponential-logarithmic, and the correlation
//! maximized structural similarity loss.

use crate::config::LossConfig;
use crate::distribution::{
    ce_slope, ce_term, class_weighted_ce, class_weighted_ce_grad, weighted_ce, weighted_ce_grad,
};
use crate::error::{param, Result};
use crate::geometry::local_stats;
use crate::grid::{check_epsilon, check_shapes, GradientMap, GroundTruthMask, ProbabilityMap};
use crate::region::{dice_loss, dice_loss_grad, dice_terms};

fn check_combo(cfg: &LossConfig) -> Result<()> {
    check_epsilon(cfg.epsilon)?;
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(param("alpha", cfg.alpha, "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(param("beta", cfg.beta, "must lie in [0, 1] for Combo loss"));
    }
    Ok(())
}

/// `alpha * L_mbce + (1 - alpha) * dice_loss`, where `L_mbce` weights
/// foreground cross entropy by `beta` and background by `1 - beta`.
pub fn combo_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_combo(cfg)?;
    let mbce = class_weighted_ce(y, p, cfg.epsilon, cfg.beta, 1.0 - cfg.beta);
    let dl = dice_loss(y, p, cfg)?;
    Ok(cfg.alpha * mbce + (1.0 - cfg.alpha) * dl)
}

pub fn combo_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_combo(cfg)?;
    let mut g = class_weighted_ce_grad(y, p, cfg.epsilon, cfg.beta, 1.0 - cfg.beta);
    let dg = dice_loss_grad(y, p, cfg)?;
    for (v, d) in g.values_mut().iter_mut().zip(dg.values()) {
        *v = cfg.alpha * *v + (1.0 - cfg.alpha) * d;
    }
    Ok(g)
}

fn check_exp_log(cfg: &LossConfig) -> Result<()> {
    check_epsilon(cfg.epsilon)?;
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(param("gamma", cfg.gamma, "must be > 0"));
    }
    for (name, v) in [
        ("w_dice", cfg.w_dice),
        ("w_cross", cfg.w_cross),
        ("w_label", cfg.w_label),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(param(name, v, "must be >= 0"));
        }
    }
    Ok(())
}

#[inline]
fn pow_gamma(x: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        x
    } else {
        x.powf(gamma)
    }
}

/// `d x^gamma / dx`, taken as zero at `x = 0` when `gamma != 1`.
#[inline]
fn pow_gamma_slope(x: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else {
        gamma * x.powf(gamma - 1.0)
    }
}

/// `w_dice * (-ln DC)^gamma + w_cross * mean(w_label * (-ln p_t)^gamma)`.
///
/// `DC` is the smoothed soft Dice coefficient clamped to `[epsilon, 1]`.
pub fn exp_log_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    check_shapes(y, p)?;
    check_exp_log(cfg)?;
    let dc = dice_terms(y, p, cfg.smooth)?
        .coefficient()
        .clamp(cfg.epsilon, 1.0);
    let l_dice = pow_gamma(0.0 - dc.ln(), cfg.gamma);
    let mut acc = 0.0;
    for (&t, &q) in y.values().iter().zip(p.values()) {
        acc += cfg.w_label * pow_gamma(ce_term(t, q, cfg.epsilon), cfg.gamma);
    }
    let l_cross = acc / p.values().len() as f64;
    Ok(cfg.w_dice * l_dice + cfg.w_cross * l_cross)
}

pub fn exp_log_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_exp_log(cfg)?;
    let terms = dice_terms(y, p, cfg.smooth)?;
    let raw = terms.coefficient();
    // Chain: d/dp (-ln DC)^g = g (-ln DC)^(g-1) * (-1/DC) * dDC/dp
    let dice_outer = if raw < cfg.epsilon || raw > 1.0 {
        0.0
    } else {
        -pow_gamma_slope(0.0 - raw.ln(), cfg.gamma) / raw
    };
    let n = p.values().len() as f64;
    let values = y
        .values()
        .iter()
        .zip(p.values())
        .map(|(&t, &q)| {
            let dice = dice_outer * terms.coefficient_slope(t);
            let ce = ce_term(t, q, cfg.epsilon);
            let cross =
                cfg.w_label * pow_gamma_slope(ce, cfg.gamma) * ce_slope(t, q, cfg.epsilon) / n;
            cfg.w_dice * dice + cfg.w_cross * cross
        })
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

/// Per-pixel structural error
/// `|(y - mu_y + C4)/(sigma_y + C4) - (p - mu_p + C4)/(sigma_p + C4)|`.
pub fn structural_error(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_shapes(y, p)?;
    if !(cfg.c4 > 0.0 && cfg.c4.is_finite()) {
        return Err(param("c4", cfg.c4, "must be > 0"));
    }
    let truth = y.to_probabilities().into_grid();
    let ys = local_stats(&truth, cfg.window)?;
    let ps = local_stats(p.as_grid(), cfg.window)?;
    let c4 = cfg.c4;
    Ok(truth
        .values()
        .iter()
        .zip(p.values())
        .enumerate()
        .map(|(i, (&t, &q))| {
            let zy = (t - ys.mean.values()[i] + c4) / (ys.std.values()[i] + c4);
            let zp = (q - ps.mean.values()[i] + c4) / (ps.std.values()[i] + c4);
            (zy - zp).abs()
        })
        .collect())
}

/// Frozen structural weights: `e_i * f_i` per pixel and the kept-pixel
/// count `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SslWeights {
    pub weights: Vec<f64>,
    pub kept: f64,
}

fn select(errors: &[f64], cut: f64) -> (Vec<f64>, f64) {
    let mut kept = 0.0;
    let weights = errors
        .iter()
        .map(|&e| {
            if e > cut {
                kept += 1.0;
                e
            } else {
                0.0
            }
        })
        .collect();
    (weights, kept)
}

fn check_ssl_beta(cfg: &LossConfig) -> Result<()> {
    if (0.0..=1.0).contains(&cfg.ssl_beta) {
        Ok(())
    } else {
        Err(param("ssl_beta", cfg.ssl_beta, "must lie in [0, 1]"))
    }
}

pub fn ssl_weights(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<SslWeights> {
    check_ssl_beta(cfg)?;
    let errors = structural_error(y, p, cfg)?;
    let e_max = errors.iter().copied().fold(0.0, f64::max);
    let (weights, kept) = select(&errors, cfg.ssl_beta * e_max);
    Ok(SslWeights { weights, kept })
}

pub fn ssl_loss_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    frozen: &SslWeights,
    cfg: &LossConfig,
) -> Result<f64> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    Ok(weighted_ce(y, p, cfg.epsilon, &frozen.weights, frozen.kept))
}

pub fn ssl_loss_grad_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    frozen: &SslWeights,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    Ok(weighted_ce_grad(y, p, cfg.epsilon, &frozen.weights, frozen.kept))
}

/// Structural similarity loss: `(1/M) sum e_i f_i ce_i`, where
/// `f_i = [e_i > ssl_beta * e_max]` and `M = sum f_i`. Zero when no pixel
/// is kept.
pub fn ssl_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    let frozen = ssl_weights(y, p, cfg)?;
    ssl_loss_with(y, p, &frozen, cfg)
}

pub fn ssl_loss_grad(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<GradientMap> {
    let frozen = ssl_weights(y, p, cfg)?;
    ssl_loss_grad_with(y, p, &frozen, cfg)
}

/// Mini-batch form: `e_max` and `M` are taken over the whole batch.
pub fn ssl_loss_batch(
    batch: &[(&GroundTruthMask, &ProbabilityMap)],
    cfg: &LossConfig,
) -> Result<f64> {
    check_ssl_beta(cfg)?;
    check_epsilon(cfg.epsilon)?;
    let errors = batch
        .iter()
        .map(|(y, p)| structural_error(y, p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let e_max = errors.iter().flatten().copied().fold(0.0, f64::max);
    let cut = cfg.ssl_beta * e_max;
    let mut total_kept = 0.0;
    let mut acc = 0.0;
    for ((y, p), e) in batch.iter().zip(&errors) {
        let (weights, kept) = select(e, cut);
        total_kept += kept;
        acc += weighted_ce(y, p, cfg.epsilon, &weights, 1.0);
    }
    Ok(if total_kept == 0.0 { 0.0 } else { acc / total_kept })
}
