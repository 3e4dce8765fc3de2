//! Spatial anomaly detection for scattered sensor readings on an annulus.
//!
//! Each dataset is modelled as a Gaussian random field whose hyperparameters
//! are fitted by MAP. Fields are compared sensor by sensor with a 1D
//! Wasserstein distance normalized by each field's Bayesian area average,
//! and a sensor is flagged when its distance reaches a percentile threshold
//! calibrated on pairs of standard datasets. Several baselines can be fused
//! into one through a Wasserstein barycenter, and Dirichlet-weighted
//! barycenters generate synthetic fields.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod error;
pub mod field;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod optimize;
pub mod ot;
pub mod quadrature;
pub mod synth;

pub use error::{Error, Result};
pub use field::{
    fit_map, Hyperparameters, OptimizerSettings, SensorDataset, StationConfig, TrainedField,
};
pub use gaussian::{AreaAverage, GaussianField, Location, Marginal, PredictiveSource};
