//! Binary segmentation losses with analytic gradients.
//!
//! Fifteen losses over a single-channel probability map, grouped as
//! distribution-based ([`distribution`]), region-based ([`region`]),
//! boundary-based ([`boundary`]) and compound ([`compound`]). Each loss
//! comes with a closed-form `dL/dp`, checked against central finite
//! differences by [`gradcheck`].
//!
//! Supporting pieces: exact Euclidean distance transforms and Hausdorff
//! distances ([`geometry`]), thresholded metrics ([`metrics`]), a per-pixel
//! logit fitting harness ([`harness`]) and plain-text file formats
//! ([`formats`]).
//!
//! ```
//! use segloss::{LossConfig, LossId, GroundTruthMask, ProbabilityMap, ShapeHW};
//!
//! let shape = ShapeHW::new(1, 2).unwrap();
//! let y = GroundTruthMask::new(shape, vec![true, false]).unwrap();
//! let p = ProbabilityMap::new(shape, vec![0.9, 0.2]).unwrap();
//! let cfg = LossConfig::default();
//! let v = segloss::loss_value(LossId::Dice, &y, &p, &cfg, None).unwrap();
//! assert!(v > 0.0 && v < 0.2);
//! ```

pub mod boundary;
pub mod compound;
pub mod config;
pub mod distribution;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod region;
pub mod registry;

pub use config::LossConfig;
pub use error::{Result, SegLossError};
pub use geometry::{DistanceMap, PixelSet};
pub use gradcheck::GradCheckResult;
pub use grid::{GradientMap, GroundTruthMask, LogitMap, ProbabilityMap, RealGrid, ShapeHW};
pub use harness::{FitConfig, FitTrace, LossReport, SyntheticMaskSpec};
pub use registry::{analytic_gradient, loss_value, LossId};
