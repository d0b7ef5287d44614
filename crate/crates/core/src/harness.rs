//! Gradient descent on a per-pixel logit map against synthetic masks.
//!
//! Every pixel owns a free logit `z`; the prediction is `sigmoid(z)` and
//! each step applies `z -= lr * dL/dp * p * (1 - p)`. Frozen coefficients
//! are recomputed from the current prediction once per step.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::LossConfig;
use crate::error::{param, Result, SegLossError};
use crate::grid::{sigmoid, GroundTruthMask, LogitMap, ShapeHW};
use crate::metrics::{binarize, hard_confusion};
use crate::registry::{auto_phi, freeze, LossId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// Pixels whose centre lies within `radius` of `center` (row, col).
    Disk { radius: f64, center: (f64, f64) },
    Rectangle {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    /// Two disjoint disks of equal radius on the main diagonal.
    TwoDisks { radius: f64 },
    /// Exactly `round(fraction * H * W)` foreground pixels placed at random.
    Sparse { fraction: f64 },
}

/// Recipe for a synthetic ground-truth mask.
///
/// Text form is `kind:HxW[:key=value,...]`, for example `disk:32x32`,
/// `disk:32x32:r=5,cy=10,cx=12`, `rectangle:16x16:top=2,left=3,h=4,w=5`,
/// `two_disks:32x32:r=4` or `sparse:64x64:f=0.01,seed=3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticMaskSpec {
    pub kind: MaskKind,
    pub shape: ShapeHW,
    pub seed: u64,
}

impl SyntheticMaskSpec {
    /// Centred disk with radius a quarter of the shorter side.
    pub fn disk(shape: ShapeHW) -> Self {
        let side = shape.height().min(shape.width()) as f64;
        Self {
            kind: MaskKind::Disk {
                radius: 0.25 * side,
                center: default_center(shape),
            },
            shape,
            seed: 0,
        }
    }

    /// Centred rectangle covering the middle half of each axis.
    pub fn rectangle(shape: ShapeHW) -> Self {
        let (h, w) = (shape.height(), shape.width());
        Self {
            kind: MaskKind::Rectangle {
                top: h / 4,
                left: w / 4,
                height: (h / 2).max(1),
                width: (w / 2).max(1),
            },
            shape,
            seed: 0,
        }
    }

    pub fn two_disks(shape: ShapeHW) -> Self {
        let side = shape.height().min(shape.width()) as f64;
        Self {
            kind: MaskKind::TwoDisks { radius: 0.15 * side },
            shape,
            seed: 0,
        }
    }

    pub fn sparse(shape: ShapeHW, fraction: f64, seed: u64) -> Self {
        Self {
            kind: MaskKind::Sparse { fraction },
            shape,
            seed,
        }
    }
}

fn default_center(shape: ShapeHW) -> (f64, f64) {
    (
        (shape.height() - 1) as f64 / 2.0,
        (shape.width() - 1) as f64 / 2.0,
    )
}

impl fmt::Display for SyntheticMaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (h, w) = (self.shape.height(), self.shape.width());
        match self.kind {
            MaskKind::Disk { radius, center } => {
                write!(f, "disk:{h}x{w}:r={radius},cy={},cx={}", center.0, center.1)
            }
            MaskKind::Rectangle {
                top,
                left,
                height,
                width,
            } => write!(f, "rectangle:{h}x{w}:top={top},left={left},h={height},w={width}"),
            MaskKind::TwoDisks { radius } => write!(f, "two_disks:{h}x{w}:r={radius}"),
            MaskKind::Sparse { fraction } => {
                write!(f, "sparse:{h}x{w}:f={fraction},seed={}", self.seed)
            }
        }
    }
}

fn spec_error(spec: &str, reason: impl Into<String>) -> SegLossError {
    SegLossError::InvalidMaskSpec {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

/// Parses `HxW`.
pub fn parse_shape(text: &str) -> Result<ShapeHW> {
    let bad = || SegLossError::InvalidShape {
        height: 0,
        width: 0,
        reason: "expected HxW with positive integers",
    };
    let (h, w) = text.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let h = h.parse().map_err(|_| bad())?;
    let w = w.parse().map_err(|_| bad())?;
    ShapeHW::new(h, w)
}

impl FromStr for SyntheticMaskSpec {
    type Err = SegLossError;

    fn from_str(text: &str) -> Result<Self> {
        let mut parts = text.trim().splitn(3, ':');
        let kind = parts.next().unwrap_or_default();
        let shape_text = parts
            .next()
            .ok_or_else(|| spec_error(text, "missing HxW shape"))?;
        let shape = parse_shape(shape_text).map_err(|e| spec_error(text, e.to_string()))?;

        let mut params: Vec<(&str, &str, bool)> = Vec::new();
        if let Some(rest) = parts.next().filter(|r| !r.is_empty()) {
            for pair in rest.split(',') {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| spec_error(text, format!("expected key=value, got `{pair}`")))?;
                params.push((k.trim(), v.trim(), false));
            }
        }
        let mut take = |key: &str| -> Option<&str> {
            params.iter_mut().find(|(k, _, _)| *k == key).map(|entry| {
                entry.2 = true;
                entry.1
            })
        };
        let real = |v: Option<&str>, key: &str| -> Result<Option<f64>> {
            v.map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| spec_error(text, format!("`{key}` must be a finite number")))
            })
            .transpose()
        };
        let int = |v: Option<&str>, key: &str| -> Result<Option<usize>> {
            v.map(|s| {
                s.parse::<usize>()
                    .map_err(|_| spec_error(text, format!("`{key}` must be a non-negative integer")))
            })
            .transpose()
        };

        let seed = take("seed")
            .map(|s| s.parse::<u64>().map_err(|_| spec_error(text, "`seed` must be an integer")))
            .transpose()?
            .unwrap_or(0);
        let mut spec = match kind {
            "disk" => {
                let mut spec = SyntheticMaskSpec::disk(shape);
                if let MaskKind::Disk { radius, center } = &mut spec.kind {
                    *radius = real(take("r"), "r")?.unwrap_or(*radius);
                    center.0 = real(take("cy"), "cy")?.unwrap_or(center.0);
                    center.1 = real(take("cx"), "cx")?.unwrap_or(center.1);
                }
                spec
            }
            "rectangle" => {
                let mut spec = SyntheticMaskSpec::rectangle(shape);
                if let MaskKind::Rectangle {
                    top,
                    left,
                    height,
                    width,
                } = &mut spec.kind
                {
                    *top = int(take("top"), "top")?.unwrap_or(*top);
                    *left = int(take("left"), "left")?.unwrap_or(*left);
                    *height = int(take("h"), "h")?.unwrap_or(*height);
                    *width = int(take("w"), "w")?.unwrap_or(*width);
                }
                spec
            }
            "two_disks" => {
                let mut spec = SyntheticMaskSpec::two_disks(shape);
                if let MaskKind::TwoDisks { radius } = &mut spec.kind {
                    *radius = real(take("r"), "r")?.unwrap_or(*radius);
                }
                spec
            }
            "sparse" => {
                let fraction = real(take("f"), "f")?.unwrap_or(0.01);
                SyntheticMaskSpec::sparse(shape, fraction, 0)
            }
            other => {
                return Err(spec_error(
                    text,
                    format!("unknown kind `{other}`; expected disk, rectangle, two_disks or sparse"),
                ))
            }
        };
        spec.seed = seed;
        if let Some((k, _, _)) = params.iter().find(|(_, _, used)| !used) {
            return Err(spec_error(text, format!("unknown parameter `{k}` for {kind}")));
        }
        validate_spec(&spec).map_err(|reason| spec_error(text, reason))?;
        Ok(spec)
    }
}

fn validate_spec(spec: &SyntheticMaskSpec) -> std::result::Result<(), String> {
    match spec.kind {
        MaskKind::Disk { radius, center } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(format!("radius must be positive, got {radius}"));
            }
            if !(center.0.is_finite() && center.1.is_finite()) {
                return Err("centre must be finite".into());
            }
        }
        MaskKind::TwoDisks { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(format!("radius must be positive, got {radius}"));
            }
        }
        MaskKind::Rectangle {
            top,
            left,
            height,
            width,
        } => {
            if height == 0 || width == 0 {
                return Err("rectangle must be non-empty".into());
            }
            let fits = |start: usize, len: usize, limit: usize| {
                start.checked_add(len).is_some_and(|end| end <= limit)
            };
            if !fits(top, height, spec.shape.height()) || !fits(left, width, spec.shape.width()) {
                return Err(format!("rectangle does not fit in {}", spec.shape));
            }
        }
        MaskKind::Sparse { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(format!("fraction must lie in [0, 1], got {fraction}"));
            }
        }
    }
    Ok(())
}

/// Rasterizes a mask spec. Deterministic for a given spec and seed.
pub fn generate_mask(spec: &SyntheticMaskSpec) -> Result<GroundTruthMask> {
    validate_spec(spec).map_err(|reason| spec_error(&spec.to_string(), reason))?;
    let shape = spec.shape;
    let n = shape.len();
    let in_disk = |r: usize, c: usize, (cy, cx): (f64, f64), radius: f64| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        (dy * dy + dx * dx).sqrt() <= radius
    };
    let values = match spec.kind {
        MaskKind::Disk { radius, center } => (0..n)
            .map(|i| {
                let (r, c) = shape.coords(i);
                in_disk(r, c, center, radius)
            })
            .collect(),
        MaskKind::TwoDisks { radius } => {
            let (h, w) = ((shape.height() - 1) as f64, (shape.width() - 1) as f64);
            let a = (0.3 * h, 0.3 * w);
            let b = (0.7 * h, 0.7 * w);
            (0..n)
                .map(|i| {
                    let (r, c) = shape.coords(i);
                    in_disk(r, c, a, radius) || in_disk(r, c, b, radius)
                })
                .collect()
        }
        MaskKind::Rectangle {
            top,
            left,
            height,
            width,
        } => (0..n)
            .map(|i| {
                let (r, c) = shape.coords(i);
                (top..top + height).contains(&r) && (left..left + width).contains(&c)
            })
            .collect(),
        MaskKind::Sparse { fraction } => {
            let count = ((fraction * n as f64).round() as usize).min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut values = vec![false; n];
            for i in index::sample(&mut rng, n, count) {
                values[i] = true;
            }
            values
        }
    };
    GroundTruthMask::new(shape, values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Independent logits uniform in `(-0.1, 0.1)` drawn from the fit seed.
    RandomUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub loss: LossId,
    /// Number of updates; the trace covers steps `0..=steps`.
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init: Init,
    pub record_every: usize,
    pub loss_config: LossConfig,
}

impl FitConfig {
    pub fn new(loss: LossId) -> Self {
        Self {
            loss,
            steps: 500,
            learning_rate: 0.5,
            seed: 0,
            init: Init::Zeros,
            record_every: 1,
            loss_config: LossConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(param("learning_rate", self.learning_rate, "must be positive"));
        }
        if self.record_every == 0 {
            return Err(param("record_every", 0.0, "must be at least 1"));
        }
        self.loss_config.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub loss: LossId,
    pub records: Vec<TraceRecord>,
    /// The loss or an update became non-finite; records stop before it.
    pub diverged: bool,
}

pub const TRACE_HEADER: &str = "step,loss,dice,sensitivity,specificity";

impl FitTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First recorded step whose dice coefficient is at least `dice`.
    pub fn first_step_reaching(&self, dice: f64) -> Option<usize> {
        self.records.iter().find(|r| r.dice >= dice).map(|r| r.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.9e},{:.9},{:.9},{:.9}",
                r.step, r.loss, r.dice, r.sensitivity, r.specificity
            );
        }
        out
    }
}

fn initial_logits(cfg: &FitConfig, shape: ShapeHW) -> Result<LogitMap> {
    match cfg.init {
        Init::Zeros => Ok(LogitMap::zeros(shape)),
        Init::RandomUniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let values = (0..shape.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
            LogitMap::new(shape, values)
        }
    }
}

/// Runs gradient descent on free logits until `cfg.steps` updates are done
/// or the loss stops being finite.
pub fn fit(truth: &GroundTruthMask, cfg: &FitConfig) -> Result<FitTrace> {
    cfg.validate()?;
    let lc = &cfg.loss_config;
    let shape = truth.shape();
    let phi = cfg
        .loss
        .needs_distance_map()
        .then(|| auto_phi(truth, true));
    let mut z = initial_logits(cfg, shape)?.into_grid().into_values();
    let mut trace = FitTrace {
        loss: cfg.loss,
        records: Vec::new(),
        diverged: false,
    };
    for step in 0..=cfg.steps {
        let p = sigmoid(&LogitMap::new(shape, z.clone())?);
        let frozen = freeze(cfg.loss, truth, &p, lc, phi.as_ref())?;
        let value = frozen.value(truth, &p, lc)?;
        if !value.is_finite() {
            log::warn!("{}: loss became non-finite at step {step}", cfg.loss);
            trace.diverged = true;
            break;
        }
        if step % cfg.record_every == 0 || step == cfg.steps {
            let c = hard_confusion(&binarize(&p, lc.threshold)?, truth)?;
            trace.records.push(TraceRecord {
                step,
                loss: value,
                dice: c.dice(),
                sensitivity: c.sensitivity(),
                specificity: c.specificity(),
            });
        }
        if step == cfg.steps {
            break;
        }
        let grad = frozen.gradient(truth, &p, lc)?;
        for ((zi, &g), &q) in z.iter_mut().zip(grad.values()).zip(p.values()) {
            *zi -= cfg.learning_rate * g * q * (1.0 - q);
        }
        if z.iter().any(|v| !v.is_finite()) {
            log::warn!("{}: logits became non-finite after step {step}", cfg.loss);
            trace.diverged = true;
            break;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub loss: LossId,
    pub mask: SyntheticMaskSpec,
    pub dice_coefficient: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub diverged: bool,
    pub trace: FitTrace,
}

/// Final metrics per (loss, mask) pair in loss-major order.
///
/// The CSV form quotes the mask column since mask specs contain commas.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub rows: Vec<ReportRow>,
}

impl LossReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("loss_function,mask,dice_coefficient,sensitivity,specificity,diverged\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},\"{}\",{:.9},{:.9},{:.9},{}",
                r.loss, r.mask, r.dice_coefficient, r.sensitivity, r.specificity, r.diverged
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Loss Function | Mask | Dice Coefficient | Sensitivity | Specificity | Diverged |\n\
             |---|---|---:|---:|---:|---|\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | `{}` | {:.4} | {:.4} | {:.4} | {} |",
                r.loss.display_name(),
                r.mask,
                r.dice_coefficient,
                r.sensitivity,
                r.specificity,
                if r.diverged { "yes" } else { "no" }
            );
        }
        out
    }
}

/// Fits every loss against every mask. `template.loss` is ignored.
///
/// Rows may run in parallel; output order is fixed.
pub fn run_matrix(
    losses: &[LossId],
    specs: &[SyntheticMaskSpec],
    template: &FitConfig,
) -> Result<LossReport> {
    if losses.is_empty() || specs.is_empty() {
        return Err(SegLossError::InvalidMaskSpec {
            spec: String::new(),
            reason: "run_matrix needs at least one loss and one mask".into(),
        });
    }
    template.validate()?;
    let masks = specs.iter().map(generate_mask).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(LossId, usize)> = losses
        .iter()
        .flat_map(|&id| (0..specs.len()).map(move |j| (id, j)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(id, j)| {
            let cfg = FitConfig {
                loss: id,
                ..template.clone()
            };
            let trace = fit(&masks[j], &cfg)?;
            let last = trace.last().copied().unwrap_or(TraceRecord {
                step: 0,
                loss: f64::NAN,
                dice: 0.0,
                sensitivity: 0.0,
                specificity: 0.0,
            });
            Ok(ReportRow {
                loss: id,
                mask: specs[j],
                dice_coefficient: last.dice,
                sensitivity: last.sensitivity,
                specificity: last.specificity,
                diverged: trace.diverged,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossReport { rows })
}
