//! Pixel-set geometry: inner boundaries, exact Euclidean distance
//! transforms, Hausdorff and mean point-to-set distances, and windowed
//! local statistics.

use crate::error::{param, Result, SegLossError};
use crate::grid::{GroundTruthMask, RealGrid, ShapeHW};

/// Per-pixel Euclidean distance (in pixels) to the nearest source pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap(RealGrid);

impl DistanceMap {
    pub fn new(shape: ShapeHW, values: Vec<f64>) -> Result<Self> {
        let grid = RealGrid::new(shape, values)?;
        if let Some(i) = grid.values().iter().position(|&v| v < 0.0) {
            let (row, col) = shape.coords(i);
            return Err(SegLossError::OutOfRange {
                row,
                col,
                value: grid.values()[i],
                range: "[0, inf)",
            });
        }
        Ok(Self(grid))
    }

    pub fn zeros(shape: ShapeHW) -> Self {
        Self(RealGrid::filled(shape, 0.0))
    }

    pub fn shape(&self) -> ShapeHW {
        self.0.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn max(&self) -> f64 {
        self.values().iter().copied().fold(0.0, f64::max)
    }

    /// Divides by the maximum so values land in `[0, 1]`. An all-zero map
    /// is returned unchanged.
    pub fn normalized(&self) -> DistanceMap {
        let m = self.max();
        if m == 0.0 {
            return self.clone();
        }
        let values = self.values().iter().map(|v| v / m).collect();
        DistanceMap(RealGrid::from_raw(self.shape(), values))
    }

    pub fn as_grid(&self) -> &RealGrid {
        &self.0
    }
}

/// A set of distinct in-bounds pixel coordinates `(row, col)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSet {
    shape: ShapeHW,
    points: Vec<(usize, usize)>,
}

impl PixelSet {
    pub fn new(shape: ShapeHW, points: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = vec![false; shape.len()];
        for &(row, col) in &points {
            if row >= shape.height() || col >= shape.width() {
                return Err(SegLossError::PixelOutOfBounds { row, col, shape });
            }
            let idx = shape.index(row, col);
            if seen[idx] {
                return Err(SegLossError::DuplicatePixel { row, col });
            }
            seen[idx] = true;
        }
        Ok(Self { shape, points })
    }

    /// All foreground pixels of `mask`, row-major.
    pub fn from_mask(mask: &GroundTruthMask) -> Self {
        let shape = mask.shape();
        let points = mask
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| shape.coords(i))
            .collect();
        Self { shape, points }
    }

    pub fn shape(&self) -> ShapeHW {
        self.shape
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.points.contains(&(row, col))
    }
}

/// Foreground pixels with at least one background 4-neighbour. Pixels
/// outside the image count as background.
pub fn extract_boundary(mask: &GroundTruthMask) -> PixelSet {
    let shape = mask.shape();
    let (h, w) = (shape.height(), shape.width());
    let mut points = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let edge = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if edge {
                points.push((r, c));
            }
        }
    }
    PixelSet { shape, points }
}

/// One-dimensional squared distance transform of a sampled function using
/// the lower envelope of parabolas. Entries of `f` that are infinite do not
/// contribute a parabola; if none are finite, `out` is all infinite.
fn squared_dt_1d(f: &[f64], out: &mut [f64], hull: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    hull.clear();
    bounds.clear();
    let key = |q: usize| f[q] + (q * q) as f64;
    for (q, fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        while let Some(&last) = hull.last() {
            let s = (key(q) - key(last)) / (2.0 * (q as f64 - last as f64));
            if s <= *bounds.last().unwrap() {
                hull.pop();
                bounds.pop();
            } else {
                hull.push(q);
                bounds.push(s);
                break;
            }
        }
        if hull.is_empty() {
            hull.push(q);
            bounds.push(f64::NEG_INFINITY);
        }
    }
    if hull.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while k + 1 < hull.len() && bounds[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - hull[k] as f64;
        *slot = d * d + f[hull[k]];
    }
}

/// Squared Euclidean distance to the nearest source; infinite everywhere
/// when `sources` is empty.
fn squared_distance_transform(shape: ShapeHW, sources: &PixelSet) -> Vec<f64> {
    let (h, w) = (shape.height(), shape.width());
    let mut grid = vec![f64::INFINITY; shape.len()];
    for &(r, c) in sources.points() {
        grid[shape.index(r, c)] = 0.0;
    }
    let n = h.max(w);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut hull = Vec::with_capacity(n);
    let mut bounds = Vec::with_capacity(n);

    for c in 0..w {
        for r in 0..h {
            line[r] = grid[shape.index(r, c)];
        }
        squared_dt_1d(&line[..h], &mut out[..h], &mut hull, &mut bounds);
        for r in 0..h {
            grid[shape.index(r, c)] = out[r];
        }
    }
    for r in 0..h {
        let row = &mut grid[r * w..(r + 1) * w];
        line[..w].copy_from_slice(row);
        squared_dt_1d(&line[..w], &mut out[..w], &mut hull, &mut bounds);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

/// Exact Euclidean distance from every pixel to the nearest pixel of
/// `sources`.
pub fn distance_transform(shape: ShapeHW, sources: &PixelSet) -> Result<DistanceMap> {
    shape.ensure_same(sources.shape())?;
    if sources.is_empty() {
        return Err(SegLossError::EmptySet);
    }
    let values = squared_distance_transform(shape, sources)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(DistanceMap(RealGrid::from_raw(shape, values)))
}

/// Distance transform of the inner boundary of `mask`, or `None` when the
/// mask is empty.
pub fn boundary_distance_map(mask: &GroundTruthMask) -> Option<DistanceMap> {
    let boundary = extract_boundary(mask);
    if boundary.is_empty() {
        None
    } else {
        distance_transform(mask.shape(), &boundary).ok()
    }
}

fn nonempty_pair(a: &PixelSet, b: &PixelSet) -> Result<()> {
    a.shape().ensure_same(b.shape())?;
    if a.is_empty() || b.is_empty() {
        Err(SegLossError::EmptySet)
    } else {
        Ok(())
    }
}

/// `max_{x in a} min_{y in b} |x - y|`.
pub fn directed_hausdorff(a: &PixelSet, b: &PixelSet) -> Result<f64> {
    nonempty_pair(a, b)?;
    let dt = distance_transform(b.shape(), b)?;
    Ok(a.points()
        .iter()
        .map(|&(r, c)| dt.get(r, c))
        .fold(0.0, f64::max))
}

/// Symmetric Hausdorff distance: the larger of both directed distances.
pub fn hausdorff_distance(a: &PixelSet, b: &PixelSet) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// `(1/|a|) sum_{x in a} min_{y in b} |x - y|`.
pub fn mean_point_to_set_distance(a: &PixelSet, b: &PixelSet) -> Result<f64> {
    nonempty_pair(a, b)?;
    let dt = distance_transform(b.shape(), b)?;
    let mut acc = 0.0;
    for &(r, c) in a.points() {
        acc += dt.get(r, c);
    }
    Ok(acc / a.len() as f64)
}

/// Windowed mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    pub mean: RealGrid,
    pub std: RealGrid,
}

/// Mirror an index into `0..n` without repeating the edge sample
/// (`d c b | a b c d | c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Mean and population standard deviation over a `window x window`
/// neighbourhood centred on each pixel, with reflect padding at borders.
pub fn local_stats(grid: &RealGrid, window: usize) -> Result<LocalStats> {
    let shape = grid.shape();
    let (h, w) = (shape.height(), shape.width());
    if window == 0 || window.is_multiple_of(2) {
        return Err(param("window", window as f64, "must be a positive odd integer"));
    }
    if window > h.min(w) {
        return Err(param("window", window as f64, "must not exceed min(height, width)"));
    }
    let half = (window / 2) as isize;
    let count = (window * window) as f64;
    let mut mean = Vec::with_capacity(shape.len());
    let mut std = Vec::with_capacity(shape.len());
    let mut samples = Vec::with_capacity(window * window);
    for r in 0..h as isize {
        for c in 0..w as isize {
            samples.clear();
            for dr in -half..=half {
                let rr = reflect(r + dr, h);
                for dc in -half..=half {
                    samples.push(grid.get(rr, reflect(c + dc, w)));
                }
            }
            // Shift by the first sample so constant windows give exact
            // results.
            let anchor = samples[0];
            let mut shifted = 0.0;
            for &s in &samples {
                shifted += s - anchor;
            }
            let m = anchor + shifted / count;
            let mut var = 0.0;
            for &s in &samples {
                let d = s - m;
                var += d * d;
            }
            mean.push(m);
            std.push((var / count).sqrt());
        }
    }
    Ok(LocalStats {
        mean: RealGrid::from_raw(shape, mean),
        std: RealGrid::from_raw(shape, std),
    })
}
