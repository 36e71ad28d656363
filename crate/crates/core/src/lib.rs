//! Integrative factor regression for multimodal data.
//!
//! The pipeline is: ingest a [`MultimodalDataset`](dataset::MultimodalDataset),
//! extract latent factors per modality (or jointly) by PCA, fit penalized
//! regressions on the idiosyncratic residuals, and run one of two
//! factor-adjusted tests:
//!
//! * [`modality_test`]: decorrelated score test that a whole modality has no
//!   effect, calibrated by a χ² law with as many degrees of freedom as the
//!   modality has factors;
//! * [`wald_test`]: Wald test of `A β_T = b` from a partially penalized fit.
//!
//! [`contribution`] quantifies how much response variance one modality adds
//! on top of others, and [`simulation`] reproduces size/power studies.
//!
//! All numerical code is generic over a [`Real`] scalar (`f32` or `f64`);
//! the aliases at the crate root pin the `f64` instantiation used by the CLI.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod contribution;
pub mod dantzig;
pub mod dataset;
pub mod distributions;
mod error;
pub mod factor;
pub mod linalg;
pub mod modality_test;
pub mod penalized;
pub mod report;
pub mod simulation;

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

pub use error::{Error, Result};

/// Floating point scalar the library is generic over.
pub trait Real: NdFloat + FromPrimitive + Sum + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub(crate) fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub type ModalityPartition = dataset::ModalityPartition;
pub type Dataset = dataset::MultimodalDataset<f64>;
pub type FactorDecomposition = factor::FactorDecomposition<f64>;
pub type FactorCountCriterion = factor::FactorCountCriterion<f64>;
pub type ChiSquare = distributions::ChiSquare<f64>;
pub type Penalty = penalized::Penalty<f64>;
pub type PenalizedFit = penalized::PenalizedFit<f64>;
pub type ProjectionEstimate = dantzig::ProjectionEstimate<f64>;
pub use report::{ContributionReport, TestMethod, TestReport};
pub type LinearHypothesis = wald_test::LinearHypothesis<f64>;
pub type ThresholdedCovariance = contribution::ThresholdedCovariance<f64>;
pub use simulation::{Scenario, SizePowerCurve};
