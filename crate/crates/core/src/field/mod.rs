//! Annular Gaussian random field: kernel, MAP fit, predictive posterior and
//! Bayesian area average.

pub mod area;
mod dataset;
mod fit;
mod kernel;
mod objective;

pub use area::{
    area_average, area_kernel_integrals, normalizing_constant, radial_weight, AreaKernelIntegrals,
};
pub use dataset::{validate_locations, SensorDataset, StationConfig};
pub use fit::{
    fit_map, fit_map_with_diagnostics, OptimizerSettings, RestartSummary, TrainedField,
    TrainedFieldRecord,
};
pub use kernel::{fourier_features, kernel, radial_kernel, AnnulusKernel, Hyperparameters};
pub use objective::{log_half_normal, log_map_objective};
