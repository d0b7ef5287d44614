//! Boundary-aware losses: the distance-transform weighted Hausdorff loss
//! and the shape-aware cross entropy.
//!
//! Both depend on boundaries and distance maps extracted from the current
//! prediction. Those coefficients are non-smooth in `p`, so they are
//! computed once ("frozen") and held constant during differentiation. The
//! `*_with` functions take the frozen weights explicitly.

use crate::config::LossConfig;
use crate::distribution::{weighted_ce, weighted_ce_grad};
use crate::error::Result;
use crate::geometry::{boundary_distance_map, extract_boundary, mean_point_to_set_distance};
use crate::grid::{check_epsilon, check_shapes, GradientMap, GroundTruthMask, ProbabilityMap};
use crate::metrics::binarize;

/// Per-pixel `d_y^alpha + d_p^alpha`, where `d_y` and `d_p` are distances
/// to the ground-truth and predicted boundaries. A missing boundary
/// contributes nothing.
pub fn hausdorff_weights(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_shapes(y, p)?;
    let pred = binarize(p, cfg.threshold)?;
    let mut weights = vec![0.0; p.values().len()];
    for dt in [boundary_distance_map(y), boundary_distance_map(&pred)]
        .into_iter()
        .flatten()
    {
        for (w, &d) in weights.iter_mut().zip(dt.values()) {
            *w += d.powf(cfg.hd_alpha);
        }
    }
    Ok(weights)
}

/// `(1/N) sum (p - y)^2 w_i` with frozen weights.
pub fn hausdorff_dt_loss_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    weights: &[f64],
) -> Result<f64> {
    check_shapes(y, p)?;
    let mut acc = 0.0;
    for ((&t, &q), &w) in y.values().iter().zip(p.values()).zip(weights) {
        let e = q - f64::from(u8::from(t));
        acc += e * e * w;
    }
    Ok(acc / p.values().len() as f64)
}

pub fn hausdorff_dt_loss_grad_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    weights: &[f64],
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    let n = p.values().len() as f64;
    let values = y
        .values()
        .iter()
        .zip(p.values())
        .zip(weights)
        .map(|((&t, &q), &w)| 2.0 * (q - f64::from(u8::from(t))) * w / n)
        .collect();
    Ok(GradientMap::from_raw(p.shape(), values))
}

/// Hausdorff-style loss: squared error weighted by distance-transform
/// terms of both boundaries.
pub fn hausdorff_dt_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    let weights = hausdorff_weights(y, p, cfg)?;
    hausdorff_dt_loss_with(y, p, &weights)
}

pub fn hausdorff_dt_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let weights = hausdorff_weights(y, p, cfg)?;
    hausdorff_dt_loss_grad_with(y, p, &weights)
}

/// Average distance from the predicted boundary to the ground-truth
/// boundary. `None` when the ground truth has no boundary; zero when the
/// prediction has none.
pub fn shape_distance(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<Option<f64>> {
    check_shapes(y, p)?;
    let truth = extract_boundary(y);
    if truth.is_empty() {
        return Ok(None);
    }
    let pred = extract_boundary(&binarize(p, cfg.threshold)?);
    if pred.is_empty() {
        return Ok(Some(0.0));
    }
    mean_point_to_set_distance(&pred, &truth).map(Some)
}

/// Cross-entropy multipliers `1 + E` for the shape-aware loss.
///
/// With `cfg.shape_per_pixel` each pixel uses its own distance to the
/// ground-truth boundary instead of the image-level curve distance.
pub fn shape_weights(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_shapes(y, p)?;
    let n = p.values().len();
    if cfg.shape_per_pixel {
        return Ok(match boundary_distance_map(y) {
            Some(dt) => dt.values().iter().map(|d| 1.0 + d).collect(),
            None => {
                log::warn!("shape-aware loss: ground truth has no boundary, using plain BCE");
                vec![1.0; n]
            }
        });
    }
    match shape_distance(y, p, cfg)? {
        Some(e) => Ok(vec![1.0 + e; n]),
        None => {
            log::warn!("shape-aware loss: ground truth has no boundary, using plain BCE");
            Ok(vec![1.0; n])
        }
    }
}

/// `(1/N) sum (1 + E) ce_i` with frozen multipliers.
pub fn shape_aware_loss_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    weights: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    Ok(weighted_ce(y, p, cfg.epsilon, weights, p.values().len() as f64))
}

pub fn shape_aware_loss_grad_with(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    weights: &[f64],
    cfg: &LossConfig,
) -> Result<GradientMap> {
    check_shapes(y, p)?;
    check_epsilon(cfg.epsilon)?;
    Ok(weighted_ce_grad(y, p, cfg.epsilon, weights, p.values().len() as f64))
}

/// Cross entropy scaled by one plus the predicted-to-true boundary
/// distance.
pub fn shape_aware_loss(y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
    let weights = shape_weights(y, p, cfg)?;
    shape_aware_loss_with(y, p, &weights, cfg)
}

pub fn shape_aware_loss_grad(
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let weights = shape_weights(y, p, cfg)?;
    shape_aware_loss_grad_with(y, p, &weights, cfg)
}
