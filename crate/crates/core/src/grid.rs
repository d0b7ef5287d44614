//! Grid types shared by every loss, plus the numeric guards and reductions
//! they are built on.
//!
//! All grids are stored row-major as `f64` (masks as `bool`). Reductions
//! always walk the buffer in row-major order so that results are
//! bit-reproducible.

use std::fmt;

use crate::error::{param, Result, SegLossError};

/// Upper bound on `height * width`.
pub const MAX_PIXELS: usize = 1 << 26;

/// Height and width of a 2-D grid, both at least one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeHW {
    height: usize,
    width: usize,
}

impl ShapeHW {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(SegLossError::InvalidShape {
                height,
                width,
                reason: "both dimensions must be at least 1",
            });
        }
        match height.checked_mul(width) {
            Some(n) if n <= MAX_PIXELS => Ok(Self { height, width }),
            _ => Err(SegLossError::InvalidShape {
                height,
                width,
                reason: "more than 2^26 pixels",
            }),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    /// Always false; a shape has at least one pixel.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn ensure_same(&self, other: ShapeHW) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(SegLossError::ShapeMismatch {
                expected: *self,
                found: other,
            })
        }
    }

    fn check_len(&self, found: usize) -> Result<()> {
        if found == self.len() {
            Ok(())
        } else {
            Err(SegLossError::LengthMismatch {
                shape: *self,
                expected: self.len(),
                found,
            })
        }
    }
}

impl fmt::Display for ShapeHW {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Binary ground-truth mask. `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundTruthMask {
    shape: ShapeHW,
    values: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(shape: ShapeHW, values: Vec<bool>) -> Result<Self> {
        shape.check_len(values.len())?;
        Ok(Self { shape, values })
    }

    /// Builds a mask from 0/1 numbers; anything else is rejected.
    pub fn from_binary(shape: ShapeHW, values: &[f64]) -> Result<Self> {
        shape.check_len(values.len())?;
        let mut out = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v == 0.0 {
                out.push(false);
            } else if v == 1.0 {
                out.push(true);
            } else {
                let (row, col) = shape.coords(i);
                return Err(SegLossError::OutOfRange {
                    row,
                    col,
                    value: v,
                    range: "{0, 1}",
                });
            }
        }
        Ok(Self { shape, values: out })
    }

    pub fn filled(shape: ShapeHW, value: bool) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> ShapeHW {
        self.shape
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[self.shape.index(row, col)]
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// The mask as a probability map with values exactly 0.0 or 1.0.
    pub fn to_probabilities(&self) -> ProbabilityMap {
        ProbabilityMap(RealGrid {
            shape: self.shape,
            values: self.values.iter().map(|&v| f64::from(u8::from(v))).collect(),
        })
    }
}

/// A rectangular grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    shape: ShapeHW,
    values: Vec<f64>,
}

impl RealGrid {
    pub fn new(shape: ShapeHW, values: Vec<f64>) -> Result<Self> {
        shape.check_len(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = shape.coords(i);
            return Err(SegLossError::OutOfRange {
                row,
                col,
                value: values[i],
                range: "finite reals",
            });
        }
        Ok(Self { shape, values })
    }

    pub fn filled(shape: ShapeHW, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub(crate) fn from_raw(shape: ShapeHW, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> ShapeHW {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn check_range(&self, lo: f64, hi: f64, range: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !(lo..=hi).contains(v)) {
            None => Ok(()),
            Some(i) => {
                let (row, col) = self.shape.coords(i);
                Err(SegLossError::OutOfRange {
                    row,
                    col,
                    value: self.values[i],
                    range,
                })
            }
        }
    }
}

macro_rules! grid_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub(crate) RealGrid);

        impl $name {
            pub fn shape(&self) -> ShapeHW {
                self.0.shape
            }

            pub fn values(&self) -> &[f64] {
                &self.0.values
            }

            pub fn get(&self, row: usize, col: usize) -> f64 {
                self.0.get(row, col)
            }

            pub fn as_grid(&self) -> &RealGrid {
                &self.0
            }

            pub fn into_grid(self) -> RealGrid {
                self.0
            }
        }
    };
}

grid_newtype!(
    /// Per-pixel foreground probabilities in `[0, 1]`.
    ProbabilityMap
);
grid_newtype!(
    /// Unconstrained per-pixel logits.
    LogitMap
);
grid_newtype!(
    /// `dL/dp` per pixel.
    GradientMap
);

impl ProbabilityMap {
    pub fn new(shape: ShapeHW, values: Vec<f64>) -> Result<Self> {
        Self::from_grid(RealGrid::new(shape, values)?)
    }

    pub fn from_grid(grid: RealGrid) -> Result<Self> {
        grid.check_range(0.0, 1.0, "[0, 1]")?;
        Ok(Self(grid))
    }

    pub fn filled(shape: ShapeHW, value: f64) -> Result<Self> {
        Self::from_grid(RealGrid::filled(shape, value))
    }

    /// Skips the range check. Used for finite-difference probes that may
    /// step a hair outside `[0, 1]`.
    pub(crate) fn from_raw(shape: ShapeHW, values: Vec<f64>) -> Self {
        Self(RealGrid::from_raw(shape, values))
    }
}

impl LogitMap {
    pub fn new(shape: ShapeHW, values: Vec<f64>) -> Result<Self> {
        Ok(Self(RealGrid::new(shape, values)?))
    }

    pub fn zeros(shape: ShapeHW) -> Self {
        Self(RealGrid::filled(shape, 0.0))
    }
}

impl GradientMap {
    pub fn new(shape: ShapeHW, values: Vec<f64>) -> Result<Self> {
        Ok(Self(RealGrid::new(shape, values)?))
    }

    pub(crate) fn from_raw(shape: ShapeHW, values: Vec<f64>) -> Self {
        Self(RealGrid::from_raw(shape, values))
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0.values
    }
}

/// Clamps a scalar probability into `[epsilon, 1 - epsilon]`.
#[inline]
pub fn clamp_scalar(p: f64, epsilon: f64) -> f64 {
    p.clamp(epsilon, 1.0 - epsilon)
}

/// Derivative of [`clamp_scalar`]: one strictly inside the clamp range,
/// zero where the clamp is active.
#[inline]
pub(crate) fn clamp_slope(p: f64, epsilon: f64) -> f64 {
    if p > epsilon && p < 1.0 - epsilon {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(param("epsilon", epsilon, "must lie in (0, 0.5)"))
    }
}

/// Clamps every probability into `[epsilon, 1 - epsilon]`.
pub fn clamp_prob(p: &ProbabilityMap, epsilon: f64) -> Result<ProbabilityMap> {
    check_epsilon(epsilon)?;
    let values = p.values().iter().map(|&v| clamp_scalar(v, epsilon)).collect();
    Ok(ProbabilityMap(RealGrid::from_raw(p.shape(), values)))
}

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(z: &LogitMap) -> ProbabilityMap {
    let values = z.values().iter().map(|&v| sigmoid_scalar(v)).collect();
    ProbabilityMap(RealGrid::from_raw(z.shape(), values))
}

/// Soft (probabilistic) confusion counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftConfusion {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
}

impl SoftConfusion {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn soft_confusion(y: &GroundTruthMask, p: &ProbabilityMap) -> Result<SoftConfusion> {
    y.shape().ensure_same(p.shape())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &q) in y.values().iter().zip(p.values()) {
        if t {
            tp += q;
            fn_ += 1.0 - q;
        } else {
            fp += q;
            tn += 1.0 - q;
        }
    }
    Ok(SoftConfusion { tp, fp, tn, fn_ })
}

/// Row-major sequential sum. Grids are never empty, so this cannot fail.
#[inline]
pub(crate) fn sum_row_major(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in values {
        acc += v;
    }
    acc
}

pub fn reduce_sum(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(SegLossError::EmptyGrid);
    }
    Ok(sum_row_major(values))
}

pub fn reduce_mean(values: &[f64]) -> Result<f64> {
    Ok(reduce_sum(values)? / values.len() as f64)
}

pub(crate) fn check_shapes(y: &GroundTruthMask, p: &ProbabilityMap) -> Result<()> {
    y.shape().ensure_same(p.shape())
}
