//! Brute-force oracles and random inputs shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segloss::{GroundTruthMask, ProbabilityMap, ShapeHW};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shape(h: usize, w: usize) -> ShapeHW {
    ShapeHW::new(h, w).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, shape: ShapeHW, density: f64) -> GroundTruthMask {
    let v = (0..shape.len()).map(|_| rng.gen_bool(density)).collect();
    GroundTruthMask::new(shape, v).unwrap()
}

pub fn random_probs(rng: &mut ChaCha8Rng, shape: ShapeHW, lo: f64, hi: f64) -> ProbabilityMap {
    let v = (0..shape.len()).map(|_| rng.gen_range(lo..=hi)).collect();
    ProbabilityMap::new(shape, v).unwrap()
}

/// Up to `max` distinct points, at least one.
pub fn random_points(rng: &mut ChaCha8Rng, shape: ShapeHW, max: usize) -> Vec<(usize, usize)> {
    let k = rng.gen_range(1..=max.min(shape.len()));
    let mut pts = Vec::with_capacity(k);
    while pts.len() < k {
        let p = (rng.gen_range(0..shape.height()), rng.gen_range(0..shape.width()));
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    pts
}

pub fn dist(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (dr * dr + dc * dc).sqrt()
}

fn nearest(p: (usize, usize), set: &[(usize, usize)]) -> f64 {
    set.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min)
}

/// Distance from every pixel to its nearest source, by exhaustive search.
pub fn brute_edt(shape: ShapeHW, sources: &[(usize, usize)]) -> Vec<f64> {
    (0..shape.len())
        .map(|i| nearest(shape.coords(i), sources))
        .collect()
}

pub fn brute_hausdorff(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let directed = |x: &[(usize, usize)], y: &[(usize, usize)]| {
        x.iter().map(|&p| nearest(p, y)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

pub fn brute_mean_distance(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let mut acc = 0.0;
    for &p in a {
        acc += nearest(p, b);
    }
    acc / a.len() as f64
}

/// Soft counts `(tp, fp, fn)` computed directly from the definitions.
pub fn soft_counts(y: &GroundTruthMask, p: &ProbabilityMap) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&t, &q) in y.values().iter().zip(p.values()) {
        let t = if t { 1.0 } else { 0.0 };
        tp += t * q;
        fp += (1.0 - t) * q;
        fn_ += t * (1.0 - q);
    }
    (tp, fp, fn_)
}
