mod common;

use proptest::prelude::*;

use segloss::boundary::{hausdorff_dt_loss_with, shape_aware_loss};
use segloss::compound::{combo_loss, ssl_loss, ssl_loss_with, ssl_weights};
use segloss::distribution::{self, bce};
use segloss::formats::{parse_grid, parse_mask, serialize_grid, serialize_mask};
use segloss::geometry::{
    boundary_distance_map, distance_transform, hausdorff_distance, local_stats, PixelSet,
};
use segloss::grid::{clamp_prob, reduce_sum, sigmoid_scalar, soft_confusion};
use segloss::harness::{generate_mask, SyntheticMaskSpec};
use segloss::metrics::{dice_coefficient, sensitivity, specificity};
use segloss::region::{dice_loss, log_cosh_dice_loss};
use segloss::{
    analytic_gradient, loss_value, DistanceMap, GroundTruthMask, LossConfig, LossId,
    ProbabilityMap, RealGrid, ShapeHW,
};

const EPS: f64 = 1e-7;

fn shape_strategy(max: usize) -> impl Strategy<Value = ShapeHW> {
    (1..=max, 1..=max).prop_map(|(h, w)| ShapeHW::new(h, w).unwrap())
}

fn case(max: usize) -> impl Strategy<Value = (GroundTruthMask, ProbabilityMap)> {
    shape_strategy(max).prop_flat_map(|s| {
        (
            proptest::collection::vec(any::<bool>(), s.len()),
            proptest::collection::vec(0.0..=1.0f64, s.len()),
        )
            .prop_map(move |(y, p)| {
                (
                    GroundTruthMask::new(s, y).unwrap(),
                    ProbabilityMap::new(s, p).unwrap(),
                )
            })
    })
}

fn mask(max: usize) -> impl Strategy<Value = GroundTruthMask> {
    shape_strategy(max).prop_flat_map(|s| {
        proptest::collection::vec(any::<bool>(), s.len())
            .prop_map(move |v| GroundTruthMask::new(s, v).unwrap())
    })
}

fn mask_pair(max: usize) -> impl Strategy<Value = (GroundTruthMask, GroundTruthMask)> {
    shape_strategy(max).prop_flat_map(|s| {
        (
            proptest::collection::vec(any::<bool>(), s.len()),
            proptest::collection::vec(any::<bool>(), s.len()),
        )
            .prop_map(move |(a, b)| {
                (
                    GroundTruthMask::new(s, a).unwrap(),
                    GroundTruthMask::new(s, b).unwrap(),
                )
            })
    })
}

fn point_set(s: ShapeHW, max: usize) -> impl Strategy<Value = PixelSet> {
    proptest::collection::btree_set((0..s.height(), 0..s.width()), 1..=max)
        .prop_map(move |pts| PixelSet::new(s, pts.into_iter().collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn soft_counts_partition_pixels((y, p) in case(12)) {
        let c = soft_confusion(&y, &p).unwrap();
        let n = y.shape().len() as f64;
        prop_assert!((c.total() - n).abs() <= 1e-9 * n);
    }

    #[test]
    fn clamp_is_idempotent((_, p) in case(8)) {
        let once = clamp_prob(&p, EPS).unwrap();
        prop_assert_eq!(clamp_prob(&once, EPS).unwrap(), once);
    }

    #[test]
    fn sigmoid_is_odd_symmetric(z in -40.0..40.0f64) {
        prop_assert!((sigmoid_scalar(-z) - (1.0 - sigmoid_scalar(z))).abs() <= 1e-15);
    }

    #[test]
    fn reduce_sum_repeats_bitwise(v in proptest::collection::vec(-1e6..1e6f64, 1..200)) {
        let a = reduce_sum(&v).unwrap();
        let b = std::thread::spawn(move || reduce_sum(&v).unwrap()).join().unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn distribution_losses_bounded((y, p) in case(10), beta in 0.01..4.0f64, alpha in 0.0..=1.0f64, gamma in 0.0..4.0f64) {
        let cfg = LossConfig { beta, alpha, gamma, ..LossConfig::default() };
        let phi = boundary_distance_map(&y).unwrap_or_else(|| DistanceMap::zeros(y.shape()));
        let bound = -EPS.ln() * beta.max(1.0).max(alpha) * (1.0 + phi.max());
        for id in [LossId::Bce, LossId::WeightedBce, LossId::BalancedBce, LossId::Focal, LossId::DistancePenalizedCe] {
            let v = loss_value(id, &y, &p, &cfg, Some(&phi)).unwrap();
            prop_assert!(v >= 0.0 && v <= bound, "{id}: {v} vs {bound}");
        }
    }

    #[test]
    fn bce_of_truth_is_near_zero(y in mask(10)) {
        let v = bce(&y, &y.to_probabilities(), &LossConfig::default()).unwrap();
        prop_assert!(v <= -(1.0 - EPS).ln() * (1.0 + 1e-12));
    }

    #[test]
    fn single_foreground_pixel_losses_decrease(a in 1e-6..0.999f64, b in 1e-6..0.999f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = ShapeHW::new(1, 1).unwrap();
        let y = GroundTruthMask::filled(s, true);
        let phi = DistanceMap::new(s, vec![0.5]).unwrap();
        let cfg = LossConfig::default();
        for id in [LossId::Bce, LossId::WeightedBce, LossId::BalancedBce, LossId::Focal, LossId::DistancePenalizedCe] {
            let at = |q: f64| loss_value(id, &y, &ProbabilityMap::filled(s, q).unwrap(), &cfg, Some(&phi)).unwrap();
            // balanced_bce gives a full-foreground mask zero weight
            if id == LossId::BalancedBce {
                prop_assert_eq!(at(lo), 0.0);
                continue;
            }
            prop_assert!(at(hi) < at(lo), "{id} not decreasing");
        }
    }

    #[test]
    fn region_losses_in_unit_interval((y, p) in case(10), beta in 0.0..=1.0f64, gamma in 0.1..3.0f64, w in 0.0..=1.0f64) {
        let cfg = LossConfig { beta, gamma, w, ..LossConfig::default() };
        for id in [LossId::Dice, LossId::Tversky, LossId::FocalTversky, LossId::SensSpec] {
            let v = loss_value(id, &y, &p, &cfg, None).unwrap();
            prop_assert!((0.0..=1.0).contains(&v), "{id}: {v}");
        }
        let lc = loss_value(LossId::LogCoshDice, &y, &p, &cfg, None).unwrap();
        prop_assert!((0.0..=1f64.cosh().ln() + 1e-15).contains(&lc));
        prop_assert!(lc <= dice_loss(&y, &p, &cfg).unwrap());
        prop_assert_eq!(lc, log_cosh_dice_loss(&y, &p, &cfg).unwrap());
    }

    #[test]
    fn dice_loss_symmetric_for_binary((a, b) in mask_pair(10)) {
        let cfg = LossConfig::default();
        let ab = dice_loss(&a, &b.to_probabilities(), &cfg).unwrap();
        let ba = dice_loss(&b, &a.to_probabilities(), &cfg).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn dice_gradient_at_minimum_has_no_descent(y in mask(8), dir in proptest::collection::vec(-1.0..1.0f64, 64)) {
        prop_assume!(y.foreground_count() > 0);
        let cfg = LossConfig::default();
        let eps = 1e-3;
        let p = ProbabilityMap::new(
            y.shape(),
            y.values().iter().map(|&t| if t { 1.0 - eps } else { eps }).collect(),
        ).unwrap();
        let g = analytic_gradient(LossId::Dice, &y, &p, &cfg, None).unwrap();
        // Feasible directions point into [0, 1]: down on foreground, up on background.
        let mut slope = 0.0;
        for ((&t, gi), d) in y.values().iter().zip(g.values()).zip(&dir) {
            let d = if t { -d.abs() } else { d.abs() };
            slope += gi * d;
        }
        prop_assert!(slope >= -1e-6);
    }

    #[test]
    fn edt_matches_brute_force(pts in point_set(ShapeHW::new(16, 16).unwrap(), 40)) {
        let s = pts.shape();
        let dt = distance_transform(s, &pts).unwrap();
        let oracle = common::brute_edt(s, pts.points());
        prop_assert_eq!(dt.values(), oracle.as_slice());
    }

    #[test]
    fn distance_map_is_one_lipschitz(pts in point_set(ShapeHW::new(12, 9).unwrap(), 10)) {
        let s = pts.shape();
        let dt = distance_transform(s, &pts).unwrap();
        for r in 0..s.height() {
            for c in 0..s.width() {
                if r + 1 < s.height() {
                    prop_assert!((dt.get(r, c) - dt.get(r + 1, c)).abs() <= 1.0 + 1e-12);
                }
                if c + 1 < s.width() {
                    prop_assert!((dt.get(r, c) - dt.get(r, c + 1)).abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn hausdorff_symmetric_and_triangle(
        (a, b, c) in shape_strategy(12).prop_flat_map(|s| (point_set(s, 8), point_set(s, 8), point_set(s, 8)))
    ) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
        let bc = hausdorff_distance(&b, &c).unwrap();
        let ac = hausdorff_distance(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn local_stats_window_one((_, p) in case(8)) {
        let st = local_stats(p.as_grid(), 1).unwrap();
        prop_assert_eq!(st.mean.values(), p.values());
        prop_assert!(st.std.values().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn boundary_losses_vanish_on_perfect_prediction(y in mask(10)) {
        prop_assume!(y.foreground_count() > 0);
        let cfg = LossConfig::default();
        let p = y.to_probabilities();
        prop_assert_eq!(loss_value(LossId::HausdorffDt, &y, &p, &cfg, None).unwrap(), 0.0);
        prop_assert!(loss_value(LossId::ShapeAware, &y, &p, &cfg, None).unwrap() <= 1e-6);
    }

    #[test]
    fn hausdorff_ignores_weights_where_exact(
        (y, p) in case(8),
        w in proptest::collection::vec(0.0..50.0f64, 64),
        bump in 0.0..50.0f64,
    ) {
        let n = y.shape().len();
        // Force a subset of pixels to p = y.
        let q: Vec<f64> = p.values().iter().zip(y.values()).enumerate()
            .map(|(i, (&v, &t))| if i % 3 == 0 { f64::from(u8::from(t)) } else { v })
            .collect();
        let q = ProbabilityMap::new(y.shape(), q).unwrap();
        let w1 = w[..n].to_vec();
        let w2: Vec<f64> = w1.iter().enumerate().map(|(i, &x)| if i % 3 == 0 { x + bump } else { x }).collect();
        prop_assert_eq!(hausdorff_dt_loss_with(&y, &q, &w1).unwrap(), hausdorff_dt_loss_with(&y, &q, &w2).unwrap());
    }

    #[test]
    fn shape_aware_dominates_bce((y, p) in case(10), per_pixel in any::<bool>()) {
        let cfg = LossConfig { shape_per_pixel: per_pixel, ..LossConfig::default() };
        prop_assert!(shape_aware_loss(&y, &p, &cfg).unwrap() >= bce(&y, &p, &cfg).unwrap());
    }

    #[test]
    fn combo_is_convex_combination((y, p) in case(10), alpha in 0.0..=1.0f64, beta in 0.0..=1.0f64) {
        let cfg = LossConfig { alpha, beta, ..LossConfig::default() };
        let ce = loss_value(LossId::Combo, &y, &p, &LossConfig { alpha: 1.0, ..cfg.clone() }, None).unwrap();
        let dl = dice_loss(&y, &p, &cfg).unwrap();
        let v = combo_loss(&y, &p, &cfg).unwrap();
        let tol = 1e-12 * (1.0 + ce.abs() + dl.abs());
        prop_assert!(v >= ce.min(dl) - tol && v <= ce.max(dl) + tol);
    }

    #[test]
    fn exp_log_reduces_to_bce((y, p) in case(10)) {
        let cfg = LossConfig { gamma: 1.0, w_dice: 0.0, w_cross: 1.0, w_label: 1.0, ..LossConfig::default() };
        let a = loss_value(LossId::ExpLog, &y, &p, &cfg, None).unwrap();
        prop_assert!((a - distribution::bce(&y, &p, &cfg).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn ssl_ignores_dropped_pixels((y, p) in case(9), noise in proptest::collection::vec(0.0..=1.0f64, 81)) {
        let s = y.shape();
        prop_assume!(s.height() >= 3 && s.width() >= 3);
        let cfg = LossConfig::default();
        let frozen = ssl_weights(&y, &p, &cfg).unwrap();
        let moved: Vec<f64> = p.values().iter().zip(&frozen.weights).zip(&noise)
            .map(|((&v, &w), &z)| if w == 0.0 { z } else { v })
            .collect();
        let moved = ProbabilityMap::new(s, moved).unwrap();
        prop_assert_eq!(
            ssl_loss_with(&y, &p, &frozen, &cfg).unwrap(),
            ssl_loss_with(&y, &moved, &frozen, &cfg).unwrap()
        );
    }

    #[test]
    fn compound_losses_vanish_on_perfect_prediction(y in mask(10)) {
        let s = y.shape();
        prop_assume!(s.height() >= 3 && s.width() >= 3);
        let cfg = LossConfig::default();
        let p = y.to_probabilities();
        prop_assert!(combo_loss(&y, &p, &cfg).unwrap() <= 1e-6);
        prop_assert!(loss_value(LossId::ExpLog, &y, &p, &cfg, None).unwrap() <= 1e-6);
        prop_assert!(ssl_loss(&y, &p, &cfg).unwrap() <= 1e-6);
    }

    #[test]
    fn metrics_symmetric_and_bounded((a, b) in mask_pair(10)) {
        let ab = dice_coefficient(&a, &b).unwrap();
        prop_assert_eq!(ab, dice_coefficient(&b, &a).unwrap());
        prop_assert_eq!(ab == 1.0, a == b);
        for m in [ab, sensitivity(&a, &b).unwrap(), specificity(&a, &b).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn mask_round_trip(y in mask(20)) {
        prop_assert_eq!(parse_mask(serialize_mask(&y).as_bytes()).unwrap(), y);
    }

    #[test]
    fn grid_round_trip(
        (s, v) in shape_strategy(8).prop_flat_map(|s| (Just(s), proptest::collection::vec(-1e300..1e300f64, s.len())))
    ) {
        let g = RealGrid::new(s, v).unwrap();
        prop_assert_eq!(parse_grid(serialize_grid(&g).as_bytes()).unwrap(), g);
    }

    #[test]
    fn sparse_mask_count(h in 1usize..40, w in 1usize..40, f in 0.0..=1.0f64, seed in any::<u64>()) {
        let s = ShapeHW::new(h, w).unwrap();
        let m = generate_mask(&SyntheticMaskSpec::sparse(s, f, seed)).unwrap();
        prop_assert_eq!(m.foreground_count(), (f * s.len() as f64).round() as usize);
        prop_assert_eq!(generate_mask(&SyntheticMaskSpec::sparse(s, f, seed)).unwrap(), m);
    }
}

#[test]
fn imbalance_separates_bce_from_dice() {
    let s = ShapeHW::new(64, 64).unwrap();
    let y = generate_mask(&SyntheticMaskSpec::sparse(s, 0.01, 0)).unwrap();
    let p = ProbabilityMap::filled(s, EPS).unwrap();
    let cfg = LossConfig::default();
    let b = bce(&y, &p, &cfg).unwrap();
    let d = dice_loss(&y, &p, &cfg).unwrap();
    // Closed forms: 41 pixels at -ln(eps), the rest at -ln(1 - eps).
    let n = 4096.0;
    let oracle_b = (41.0 * -EPS.ln() + (n - 41.0) * -(1.0 - EPS).ln()) / n;
    let oracle_d = 1.0 - (2.0 * 41.0 * EPS + 1.0) / (41.0 + n * EPS + 1.0);
    assert!((b - oracle_b).abs() < 1e-12 && (d - oracle_d).abs() < 1e-12);
    assert!(d > 0.9 && b < d / 5.0);
}
