//! Tunable coefficients for every loss.

use crate::error::{param, Result, SegLossError};

/// All loss coefficients in one place.
///
/// Not every loss reads every field. Ranges that only matter to one loss
/// (for example `beta` in `[0, 1]` for Tversky) are checked by that loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Probability clamp used by every log-consuming loss.
    pub epsilon: f64,
    /// Additive constant in Dice and Tversky ratios.
    pub smooth: f64,
    /// Positive-class weight for weighted BCE (above 1 trades false
    /// negatives for false positives, below 1 the reverse); false-positive
    /// weight for Tversky; positive weight inside the Combo cross entropy.
    pub beta: f64,
    /// Focal weight and Combo mixing weight.
    pub alpha: f64,
    /// Focal loss applies `alpha` to foreground and `1 - alpha` to
    /// background when set; otherwise `alpha` is uniform.
    pub alpha_balanced: bool,
    /// Focusing exponent (focal, focal Tversky, exponential-logarithmic).
    pub gamma: f64,
    /// Sensitivity weight in the sensitivity-specificity loss.
    pub w: f64,
    pub w_dice: f64,
    pub w_cross: f64,
    /// Label weight inside the exponential-logarithmic cross term.
    pub w_label: f64,
    /// Stability constant of the structural similarity loss.
    pub c4: f64,
    /// Side of the local statistics window (odd).
    pub window: usize,
    /// Threshold fraction of `e_max` below which pixels are dropped by the
    /// structural similarity loss.
    pub ssl_beta: f64,
    /// Distance-transform exponent in the Hausdorff loss.
    pub hd_alpha: f64,
    /// Binarization threshold used to extract predicted boundaries.
    pub threshold: f64,
    /// Shape-aware loss weights each pixel by its own distance to the
    /// ground-truth boundary instead of one image-level curve distance.
    pub shape_per_pixel: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            smooth: 1.0,
            beta: 0.5,
            alpha: 0.5,
            alpha_balanced: false,
            gamma: 2.0,
            w: 0.5,
            w_dice: 1.0,
            w_cross: 1.0,
            w_label: 1.0,
            c4: 0.01,
            window: 3,
            ssl_beta: 0.1,
            hd_alpha: 2.0,
            threshold: 0.5,
            shape_per_pixel: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "epsilon",
    "smooth",
    "beta",
    "alpha",
    "alpha_balanced",
    "gamma",
    "w",
    "w_dice",
    "w_cross",
    "w_label",
    "c4",
    "window",
    "ssl_beta",
    "hd_alpha",
    "threshold",
    "shape_per_pixel",
];

fn unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(param(name, v, "must lie in [0, 1]"))
    }
}

fn nonneg(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(param(name, v, "must be a finite value >= 0"))
    }
}

impl LossConfig {
    /// Checks every field against its global range.
    pub fn validate(&self) -> Result<()> {
        crate::grid::check_epsilon(self.epsilon)?;
        nonneg("smooth", self.smooth)?;
        nonneg("beta", self.beta)?;
        unit("alpha", self.alpha)?;
        nonneg("gamma", self.gamma)?;
        unit("w", self.w)?;
        nonneg("w_dice", self.w_dice)?;
        nonneg("w_cross", self.w_cross)?;
        nonneg("w_label", self.w_label)?;
        if !(self.c4 > 0.0 && self.c4.is_finite()) {
            return Err(param("c4", self.c4, "must be a finite value > 0"));
        }
        if self.window.is_multiple_of(2) {
            return Err(param("window", self.window as f64, "must be odd"));
        }
        unit("ssl_beta", self.ssl_beta)?;
        if !(self.hd_alpha >= 1.0 && self.hd_alpha.is_finite()) {
            return Err(param("hd_alpha", self.hd_alpha, "must be >= 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(param("threshold", self.threshold, "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Applies one `key=value` override. Ranges are not checked here; call
    /// [`LossConfig::validate`] once all overrides are in.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || SegLossError::BadConfigValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let real = || -> Result<f64> {
            let v: f64 = value.trim().parse().map_err(|_| bad())?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        let flag = || -> Result<bool> {
            match value.trim() {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(bad()),
            }
        };
        match key.trim() {
            "epsilon" => self.epsilon = real()?,
            "smooth" => self.smooth = real()?,
            "beta" => self.beta = real()?,
            "alpha" => self.alpha = real()?,
            "alpha_balanced" => self.alpha_balanced = flag()?,
            "gamma" => self.gamma = real()?,
            "w" => self.w = real()?,
            "w_dice" => self.w_dice = real()?,
            "w_cross" => self.w_cross = real()?,
            "w_label" => self.w_label = real()?,
            "c4" => self.c4 = real()?,
            "window" => self.window = value.trim().parse().map_err(|_| bad())?,
            "ssl_beta" => self.ssl_beta = real()?,
            "hd_alpha" => self.hd_alpha = real()?,
            "threshold" => self.threshold = real()?,
            "shape_per_pixel" => self.shape_per_pixel = flag()?,
            other => {
                return Err(SegLossError::UnknownConfigKey {
                    key: other.to_string(),
                    valid: CONFIG_KEYS.join(", "),
                })
            }
        }
        Ok(())
    }

    /// Parses a `key=value` pair and applies it.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) => self.set(k, v),
            None => Err(SegLossError::BadConfigValue {
                key: pair.to_string(),
                value: String::new(),
            }),
        }
    }
}
