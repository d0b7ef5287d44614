//! Name-based dispatch over all fifteen losses.
//!
//! Losses whose coefficients come from geometry or local statistics are
//! evaluated in two steps: [`freeze`] computes those coefficients from a
//! reference prediction, and [`Frozen::value`] / [`Frozen::gradient`]
//! evaluate the loss with them held fixed. [`loss_value`] and
//! [`analytic_gradient`] freeze at the prediction itself.

use std::fmt;
use std::str::FromStr;

use crate::boundary;
use crate::compound::{self, SslWeights};
use crate::config::LossConfig;
use crate::distribution;
use crate::error::{Result, SegLossError};
use crate::geometry::{boundary_distance_map, DistanceMap};
use crate::grid::{GradientMap, GroundTruthMask, ProbabilityMap};
use crate::region;

/// Loss family, following the usual taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Distribution,
    Region,
    Boundary,
    Compound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossId {
    Bce,
    WeightedBce,
    BalancedBce,
    Focal,
    DistancePenalizedCe,
    Dice,
    Tversky,
    FocalTversky,
    SensSpec,
    LogCoshDice,
    HausdorffDt,
    ShapeAware,
    Combo,
    ExpLog,
    Ssl,
}

impl LossId {
    pub const ALL: [LossId; 15] = [
        LossId::Bce,
        LossId::WeightedBce,
        LossId::BalancedBce,
        LossId::Focal,
        LossId::DistancePenalizedCe,
        LossId::Dice,
        LossId::Tversky,
        LossId::FocalTversky,
        LossId::SensSpec,
        LossId::LogCoshDice,
        LossId::HausdorffDt,
        LossId::ShapeAware,
        LossId::Combo,
        LossId::ExpLog,
        LossId::Ssl,
    ];

    /// The nine losses compared in the reference experiment table.
    pub const EXPERIMENT: [LossId; 9] = [
        LossId::Bce,
        LossId::WeightedBce,
        LossId::Focal,
        LossId::Dice,
        LossId::Tversky,
        LossId::FocalTversky,
        LossId::SensSpec,
        LossId::ExpLog,
        LossId::LogCoshDice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossId::Bce => "bce",
            LossId::WeightedBce => "weighted_bce",
            LossId::BalancedBce => "balanced_bce",
            LossId::Focal => "focal",
            LossId::DistancePenalizedCe => "distance_penalized_ce",
            LossId::Dice => "dice",
            LossId::Tversky => "tversky",
            LossId::FocalTversky => "focal_tversky",
            LossId::SensSpec => "sens_spec",
            LossId::LogCoshDice => "log_cosh_dice",
            LossId::HausdorffDt => "hausdorff_dt",
            LossId::ShapeAware => "shape_aware",
            LossId::Combo => "combo",
            LossId::ExpLog => "exp_log",
            LossId::Ssl => "ssl",
        }
    }

    /// Human-readable label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            LossId::Bce => "Binary Cross-Entropy",
            LossId::WeightedBce => "Weighted Cross-Entropy",
            LossId::BalancedBce => "Balanced Cross-Entropy",
            LossId::Focal => "Focal Loss",
            LossId::DistancePenalizedCe => "Distance Map Penalized CE",
            LossId::Dice => "Dice Loss",
            LossId::Tversky => "Tversky Loss",
            LossId::FocalTversky => "Focal Tversky Loss",
            LossId::SensSpec => "Sensitivity-Specificity Loss",
            LossId::LogCoshDice => "Log Cosh Dice Loss",
            LossId::HausdorffDt => "Hausdorff Distance Loss",
            LossId::ShapeAware => "Shape-aware Loss",
            LossId::Combo => "Combo Loss",
            LossId::ExpLog => "Exp-Logarithmic Loss",
            LossId::Ssl => "Structural Similarity Loss",
        }
    }

    pub fn family(self) -> Family {
        match self {
            LossId::Bce
            | LossId::WeightedBce
            | LossId::BalancedBce
            | LossId::Focal
            | LossId::DistancePenalizedCe => Family::Distribution,
            LossId::Dice
            | LossId::Tversky
            | LossId::FocalTversky
            | LossId::SensSpec
            | LossId::LogCoshDice => Family::Region,
            LossId::HausdorffDt | LossId::ShapeAware => Family::Boundary,
            LossId::Combo | LossId::ExpLog | LossId::Ssl => Family::Compound,
        }
    }

    /// Whether evaluation needs a caller-supplied distance map.
    pub fn needs_distance_map(self) -> bool {
        self == LossId::DistancePenalizedCe
    }

    pub fn valid_names() -> String {
        Self::ALL.map(LossId::name).join(", ")
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossId {
    type Err = SegLossError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim();
        LossId::ALL
            .into_iter()
            .find(|id| id.name() == key)
            .ok_or_else(|| SegLossError::UnknownLoss {
                name: key.to_string(),
                valid: LossId::valid_names(),
            })
    }
}

/// Distance map of the ground-truth boundary scaled to `[0, 1]`
/// (`normalize`) or left in pixels. All zeros when `y` is empty.
pub fn auto_phi(y: &GroundTruthMask, normalize: bool) -> DistanceMap {
    match boundary_distance_map(y) {
        Some(dt) if normalize => dt.normalized(),
        Some(dt) => dt,
        None => DistanceMap::zeros(y.shape()),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Coefficients {
    None,
    Phi(DistanceMap),
    Weights(Vec<f64>),
    Ssl(SslWeights),
}

/// A loss with its geometry- and statistics-derived coefficients pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct Frozen {
    id: LossId,
    coefficients: Coefficients,
}

/// Computes the frozen coefficients of `id` at prediction `p`.
pub fn freeze(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
) -> Result<Frozen> {
    let coefficients = match id {
        LossId::DistancePenalizedCe => match aux {
            Some(phi) => Coefficients::Phi(phi.clone()),
            None => return Err(SegLossError::MissingDistanceMap(id.name())),
        },
        LossId::HausdorffDt => Coefficients::Weights(boundary::hausdorff_weights(y, p, cfg)?),
        LossId::ShapeAware => Coefficients::Weights(boundary::shape_weights(y, p, cfg)?),
        LossId::Ssl => Coefficients::Ssl(compound::ssl_weights(y, p, cfg)?),
        _ => Coefficients::None,
    };
    Ok(Frozen { id, coefficients })
}

impl Frozen {
    pub fn id(&self) -> LossId {
        self.id
    }

    pub fn value(&self, y: &GroundTruthMask, p: &ProbabilityMap, cfg: &LossConfig) -> Result<f64> {
        use Coefficients as C;
        match (self.id, &self.coefficients) {
            (LossId::Bce, _) => distribution::bce(y, p, cfg),
            (LossId::WeightedBce, _) => distribution::weighted_bce(y, p, cfg),
            (LossId::BalancedBce, _) => distribution::balanced_bce(y, p, cfg),
            (LossId::Focal, _) => distribution::focal(y, p, cfg),
            (LossId::DistancePenalizedCe, C::Phi(phi)) => {
                distribution::distance_penalized_ce(y, p, phi, cfg)
            }
            (LossId::Dice, _) => region::dice_loss(y, p, cfg),
            (LossId::Tversky, _) => region::tversky_loss(y, p, cfg),
            (LossId::FocalTversky, _) => region::focal_tversky_loss(y, p, cfg),
            (LossId::SensSpec, _) => region::sensitivity_specificity_loss(y, p, cfg),
            (LossId::LogCoshDice, _) => region::log_cosh_dice_loss(y, p, cfg),
            (LossId::HausdorffDt, C::Weights(w)) => boundary::hausdorff_dt_loss_with(y, p, w),
            (LossId::ShapeAware, C::Weights(w)) => boundary::shape_aware_loss_with(y, p, w, cfg),
            (LossId::Combo, _) => compound::combo_loss(y, p, cfg),
            (LossId::ExpLog, _) => compound::exp_log_loss(y, p, cfg),
            (LossId::Ssl, C::Ssl(s)) => compound::ssl_loss_with(y, p, s, cfg),
            (id, _) => unreachable!("coefficients for {id} built outside freeze()"),
        }
    }

    pub fn gradient(
        &self,
        y: &GroundTruthMask,
        p: &ProbabilityMap,
        cfg: &LossConfig,
    ) -> Result<GradientMap> {
        use Coefficients as C;
        match (self.id, &self.coefficients) {
            (LossId::Bce, _) => distribution::bce_grad(y, p, cfg),
            (LossId::WeightedBce, _) => distribution::weighted_bce_grad(y, p, cfg),
            (LossId::BalancedBce, _) => distribution::balanced_bce_grad(y, p, cfg),
            (LossId::Focal, _) => distribution::focal_grad(y, p, cfg),
            (LossId::DistancePenalizedCe, C::Phi(phi)) => {
                distribution::distance_penalized_ce_grad(y, p, phi, cfg)
            }
            (LossId::Dice, _) => region::dice_loss_grad(y, p, cfg),
            (LossId::Tversky, _) => region::tversky_loss_grad(y, p, cfg),
            (LossId::FocalTversky, _) => region::focal_tversky_loss_grad(y, p, cfg),
            (LossId::SensSpec, _) => region::sensitivity_specificity_loss_grad(y, p, cfg),
            (LossId::LogCoshDice, _) => region::log_cosh_dice_loss_grad(y, p, cfg),
            (LossId::HausdorffDt, C::Weights(w)) => boundary::hausdorff_dt_loss_grad_with(y, p, w),
            (LossId::ShapeAware, C::Weights(w)) => {
                boundary::shape_aware_loss_grad_with(y, p, w, cfg)
            }
            (LossId::Combo, _) => compound::combo_loss_grad(y, p, cfg),
            (LossId::ExpLog, _) => compound::exp_log_loss_grad(y, p, cfg),
            (LossId::Ssl, C::Ssl(s)) => compound::ssl_loss_grad_with(y, p, s, cfg),
            (id, _) => unreachable!("coefficients for {id} built outside freeze()"),
        }
    }
}

/// Loss value; `aux` is required for `distance_penalized_ce` and ignored
/// otherwise.
pub fn loss_value(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
) -> Result<f64> {
    freeze(id, y, p, cfg, aux)?.value(y, p, cfg)
}

/// `dL/dp` with frozen coefficients taken at `p`.
pub fn analytic_gradient(
    id: LossId,
    y: &GroundTruthMask,
    p: &ProbabilityMap,
    cfg: &LossConfig,
    aux: Option<&DistanceMap>,
) -> Result<GradientMap> {
    freeze(id, y, p, cfg, aux)?.gradient(y, p, cfg)
}

/// Evaluates every loss on a small fixed input and confirms both a value
/// and a gradient come back.
pub fn registry_is_complete() -> Result<()> {
    let shape = crate::grid::ShapeHW::new(3, 3)?;
    let y = GroundTruthMask::new(
        shape,
        vec![false, true, false, true, true, true, false, true, false],
    )?;
    let p = ProbabilityMap::new(shape, vec![0.3, 0.6, 0.2, 0.7, 0.5, 0.8, 0.4, 0.6, 0.3])?;
    let cfg = LossConfig::default();
    let phi = auto_phi(&y, true);
    for id in LossId::ALL {
        let v = loss_value(id, &y, &p, &cfg, Some(&phi))?;
        let g = analytic_gradient(id, &y, &p, &cfg, Some(&phi))?;
        debug_assert!(v.is_finite() && g.values().iter().all(|x| x.is_finite()));
    }
    Ok(())
}
