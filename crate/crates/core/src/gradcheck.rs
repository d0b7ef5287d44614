//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::LossConfig;
use crate::error::Result;
use crate::geometry::DistanceMap;
use crate::grid::{GradientMap, GroundTruthMask, ProbabilityMap, ShapeHW};
use crate::registry::{analytic_gradient, auto_phi, freeze, LossId};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Gradients smaller than this are judged on absolute error only.
pub const SMALL_GRADIENT: f64 = 1e-6;
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckResult {
    pub loss: LossId,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_pixel: (usize, usize),
    pub passed: bool,
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(x: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Numerical `dL/dp` with every frozen coefficient computed once from `p`.
pub fn finite_diff_gradient(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
    h: f64,
) -> Result<GradientMap> {
    let frozen = freeze(id, y, p, cfg, aux)?;
    let shape = p.shape();
    let mut failure = None;
    let values = central_difference(p.values(), h, |probe| {
        let q = ProbabilityMap::from_raw(shape, probe.to_vec());
        frozen.value(y, &q, cfg).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(GradientMap::from_raw(shape, values)),
    }
}

/// Compares two gradients pixel by pixel.
///
/// A pixel passes when its relative error is below `tol`, or when both
/// gradients are below [`SMALL_GRADIENT`] in magnitude and differ by less
/// than [`ABS_FLOOR`].
pub fn compare_gradients(
    loss: LossId,
    analytic: &GradientMap,
    numeric: &GradientMap,
    tol: f64,
) -> GradCheckResult {
    let shape = analytic.shape();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = (0usize, f64::NEG_INFINITY, true);
    for (i, (&a, &n)) in analytic.values().iter().zip(numeric.values()).enumerate() {
        let abs = (a - n).abs();
        let scale = a.abs().max(n.abs());
        let small = scale < SMALL_GRADIENT;
        let rel = if scale > 0.0 { abs / scale } else { 0.0 };
        let ok = rel < tol || (small && abs < ABS_FLOOR);
        max_abs = max_abs.max(abs);
        if !small {
            max_rel = max_rel.max(rel);
        }
        // Failing pixels outrank passing ones; ties go to the larger error.
        let badness = if small { abs } else { rel };
        let (_, worst_bad, worst_ok) = worst;
        let replace = match (ok, worst_ok) {
            (false, true) => true,
            (true, false) => false,
            _ => badness > worst_bad || badness.is_nan(),
        };
        if replace {
            worst = (i, badness, ok);
        }
    }
    let passed = worst.2 && analytic.values().iter().all(|g| g.is_finite());
    GradCheckResult {
        loss,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        worst_pixel: shape.coords(worst.0),
        passed,
    }
}

/// Checks an externally supplied gradient against finite differences.
pub fn check_supplied_gradient(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
    analytic: &GradientMap,
    tol: f64,
) -> Result<GradCheckResult> {
    let numeric = finite_diff_gradient(id, y, p, cfg, aux, DEFAULT_STEP)?;
    Ok(compare_gradients(id, analytic, &numeric, tol))
}

pub fn check_gradient(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
    tol: f64,
) -> Result<GradCheckResult> {
    let analytic = analytic_gradient(id, y, p, cfg, aux)?;
    check_supplied_gradient(id, y, p, cfg, aux, &analytic, tol)
}

/// Random check input: a fair-coin mask and probabilities uniform in
/// `[0.2, 0.8]`.
pub fn random_case(seed: u64, shape: ShapeHW) -> (GroundTruthMask, ProbabilityMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.len();
    let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let p = (0..n).map(|_| rng.gen_range(0.2..=0.8)).collect();
    (
        GroundTruthMask::new(shape, y).expect("length matches shape"),
        ProbabilityMap::from_raw(shape, p),
    )
}

/// Config used by [`run_gradcheck`]: defaults, with the statistics window
/// shrunk to fit grids smaller than 3 pixels on a side.
pub fn gradcheck_config(shape: ShapeHW) -> LossConfig {
    let mut cfg = LossConfig::default();
    let side = shape.height().min(shape.width());
    if cfg.window > side {
        cfg.window = if side % 2 == 1 { side } else { side - 1 };
    }
    cfg
}

/// Runs the finite-difference check for each loss on one random case.
///
/// `distance_penalized_ce` uses the normalized boundary distance map of
/// the generated mask.
pub fn run_gradcheck(
    ids: &[LossId],
    seed: u64,
    shape: ShapeHW,
    tol: f64,
) -> Result<Vec<GradCheckResult>> {
    let (y, p) = random_case(seed, shape);
    let cfg = gradcheck_config(shape);
    let phi = auto_phi(&y, true);
    ids.par_iter()
        .map(|&id| check_gradient(id, &y, &p, &cfg, Some(&phi), tol))
        .collect()
}
