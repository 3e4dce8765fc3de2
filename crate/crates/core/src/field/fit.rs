use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::area::area_average;
use super::kernel::{AnnulusKernel, FeaturedLocations, Hyperparameters};
use super::objective::MapProblem;
use super::{SensorDataset, StationConfig};
use crate::error::{Error, Result};
use crate::gaussian::{AreaAverage, GaussianField, Location, Marginal, PredictiveSource};
use crate::linalg::{cholesky_with_jitter, symmetrize_in_place};
use crate::optimize::{minimize_bfgs, BfgsSettings};
use crate::quadrature::QuadratureSettings;

/// Multi-start settings for the MAP fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            restarts: 8,
            max_iters: 500,
            grad_tol: 1e-6,
            seed: 0,
            parallel: true,
        }
    }
}

impl OptimizerSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Summary of one restart, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct RestartSummary {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A Gaussian random field conditioned on one dataset at fixed
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainedField {
    dataset: SensorDataset,
    config: StationConfig,
    hyper: Hyperparameters,
    data_offset: f64,
    train: std::sync::Arc<FeaturedLocations>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    area: OnceLock<AreaAverage>,
}

impl std::fmt::Debug for FeaturedLocations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FeaturedLocations({})", self.len())
    }
}

impl TrainedField {
    /// Conditions the field on `dataset` at the given hyperparameters.
    pub fn from_hyperparameters(
        dataset: SensorDataset,
        config: StationConfig,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate(Some(config.wave_numbers.len()))?;
        if !(dataset.noise_variance() > 0.0) {
            return Err(Error::InvalidDataset(format!(
                "dataset `{}` has no measurement noise and cannot be fitted",
                dataset.label()
            )));
        }
        let offset = dataset.mean_value();
        Self::build(dataset, config, hyper, offset)
    }

    fn build(
        dataset: SensorDataset,
        config: StationConfig,
        hyper: Hyperparameters,
        data_offset: f64,
    ) -> Result<Self> {
        let train = FeaturedLocations::new(dataset.locations(), &config.wave_numbers);
        let mut a = AnnulusKernel::new(&hyper, &config.wave_numbers).gram_featured(&train);
        for i in 0..a.nrows() {
            a[(i, i)] += dataset.noise_variance();
        }
        let (chol, jitter) = cholesky_with_jitter(&a, "K + Σ")?;
        let residuals = DVector::from_iterator(
            dataset.len(),
            dataset.values().iter().map(|v| v - data_offset),
        );
        let alpha = chol.solve(&residuals);
        Ok(TrainedField {
            dataset,
            config,
            hyper,
            data_offset,
            train: std::sync::Arc::new(train),
            chol,
            alpha,
            jitter,
            area: OnceLock::new(),
        })
    }

    pub fn dataset(&self) -> &SensorDataset {
        &self.dataset
    }

    pub fn config(&self) -> &StationConfig {
        &self.config
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn data_offset(&self) -> f64 {
        self.data_offset
    }

    /// Jitter added to the diagonal of `K + Σ`, zero when none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub(crate) fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `(K + Σ)⁻¹ (t − t̄)`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn kernel(&self) -> AnnulusKernel<'_> {
        AnnulusKernel::new(&self.hyper, &self.config.wave_numbers)
    }

    fn whitened_cross(&self, query: &FeaturedLocations) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let cross = self.kernel().cross_featured(&self.train, query);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::NotPositiveDefinite {
                matrix: "K + Σ".into(),
            })?;
        Ok((cross, v))
    }

    /// Joint predictive posterior of the latent field at `locations`.
    pub fn predict(&self, locations: &[Location]) -> Result<GaussianField> {
        let locations = validate_query(locations)?;
        let query = FeaturedLocations::new(&locations, &self.config.wave_numbers);
        let (cross, v) = self.whitened_cross(&query)?;
        let mean = cross.tr_mul(&self.alpha).add_scalar(self.data_offset);
        let mut cov = self.kernel().gram_featured(&query) - v.tr_mul(&v);
        symmetrize_in_place(&mut cov);
        Ok(GaussianField::from_parts(locations, mean, cov))
    }

    /// Like [`predict`](Self::predict), with the field's area average attached.
    pub fn predict_with_area_average(&self, locations: &[Location]) -> Result<GaussianField> {
        Ok(self
            .predict(locations)?
            .with_area_average(self.area_average()?))
    }

    /// Predictive marginals at `locations`, without forming the joint
    /// covariance. Variances are clamped at zero.
    pub fn predict_marginals(&self, locations: &[Location]) -> Result<Vec<Marginal>> {
        let locations = validate_query(locations)?;
        let query = FeaturedLocations::new(&locations, &self.config.wave_numbers);
        let (cross, v) = self.whitened_cross(&query)?;
        let k = self.kernel();
        Ok(locations
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let mean = self.data_offset + cross.column(j).dot(&self.alpha);
                let variance = (k.prior_variance(x) - v.column(j).norm_squared()).max(0.0);
                Marginal { mean, variance }
            })
            .collect())
    }

    /// Area average at the given quadrature settings.
    pub fn area_average_with(&self, settings: &QuadratureSettings) -> Result<AreaAverage> {
        area_average(self, settings)
    }

    /// Area average at default quadrature settings, computed once.
    pub fn area_average(&self) -> Result<AreaAverage> {
        if let Some(a) = self.area.get() {
            return Ok(*a);
        }
        let a = area_average(self, &QuadratureSettings::default())?;
        Ok(*self.area.get_or_init(|| a))
    }
}

fn validate_query(locations: &[Location]) -> Result<Vec<Location>> {
    locations
        .iter()
        .map(|l| {
            if !l.r.is_finite() || !l.theta.is_finite() || !(0.0..=1.0).contains(&l.r) {
                Err(Error::InvalidInput(format!(
                    "query location (r={}, theta={}) is outside the annulus",
                    l.r, l.theta
                )))
            } else {
                Ok(l.canonical())
            }
        })
        .collect()
}

impl PredictiveSource for TrainedField {
    fn joint(&self, locations: &[Location]) -> Result<GaussianField> {
        self.predict(locations)
    }

    fn marginals(&self, locations: &[Location]) -> Result<Vec<Marginal>> {
        self.predict_marginals(locations)
    }

    fn area_average_mean(&self) -> Result<f64> {
        Ok(self.area_average()?.mean)
    }

    fn value_scale(&self) -> f64 {
        self.dataset
            .values()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn label(&self) -> String {
        self.dataset.label().to_string()
    }
}

/// Draws a starting point in log space from the half-normal prior.
fn prior_draw(n: usize, scale: f64, seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z.abs() * scale.sqrt()).max(1e-8).ln()
        })
        .collect()
}

/// Fits hyperparameters by maximizing the log posterior from several random
/// starting points and conditions the field at the best converged optimum.
pub fn fit_map(
    dataset: &SensorDataset,
    config: &StationConfig,
    settings: &OptimizerSettings,
) -> Result<TrainedField> {
    fit_map_with_diagnostics(dataset, config, settings).map(|(f, _)| f)
}

pub fn fit_map_with_diagnostics(
    dataset: &SensorDataset,
    config: &StationConfig,
    settings: &OptimizerSettings,
) -> Result<(TrainedField, Vec<RestartSummary>)> {
    config.validate()?;
    if !(dataset.noise_variance() > 0.0) {
        return Err(Error::InvalidDataset(format!(
            "dataset `{}` has no measurement noise and cannot be fitted",
            dataset.label()
        )));
    }
    if settings.restarts == 0 {
        return Err(Error::InvalidInput(
            "at least one restart is required".into(),
        ));
    }
    let offset = dataset.mean_value();
    let residuals: Vec<f64> = dataset.values().iter().map(|v| v - offset).collect();
    let problem = MapProblem::new(
        dataset.locations(),
        &residuals,
        dataset.noise_variance(),
        config,
    );
    let bfgs = BfgsSettings {
        max_iters: settings.max_iters,
        grad_tol: settings.grad_tol,
        ..BfgsSettings::default()
    };
    let n = config.n_hyperparameters();
    let run = |restart: usize| {
        let u0 = prior_draw(n, config.prior_scale, settings.seed, restart);
        let initial = problem.log_space_value_and_grad(&u0).0;
        let out = minimize_bfgs(
            |u| {
                let (v, g) = problem.log_space_value_and_grad(u);
                (-v, g.into_iter().map(|x| -x).collect())
            },
            &u0,
            &bfgs,
        );
        let summary = RestartSummary {
            initial_objective: initial,
            final_objective: -out.value,
            grad_norm: out.grad_norm,
            iterations: out.iterations,
            converged: out.converged,
        };
        (out.x, summary)
    };
    let runs: Vec<(Vec<f64>, RestartSummary)> = if settings.parallel {
        (0..settings.restarts).into_par_iter().map(run).collect()
    } else {
        (0..settings.restarts).map(run).collect()
    };

    // fixed-order reduction: first index wins ties
    let pick = |converged_only: bool| {
        runs.iter()
            .enumerate()
            .filter(|(_, (_, s))| !converged_only || s.converged)
            .filter(|(_, (_, s))| s.final_objective.is_finite())
            .fold(None::<usize>, |best, (i, (_, s))| match best {
                Some(b) if runs[b].1.final_objective >= s.final_objective => Some(b),
                _ => Some(i),
            })
    };
    let summaries: Vec<RestartSummary> = runs.iter().map(|(_, s)| s.clone()).collect();
    match pick(true) {
        Some(i) => {
            let hyper = Hyperparameters::from_log_slice(&runs[i].0);
            let field = TrainedField::build(dataset.clone(), config.clone(), hyper, offset)?;
            Ok((field, summaries))
        }
        None => {
            let best = pick(false).unwrap_or(0);
            Err(Error::MapNonConvergence {
                best: Box::new(Hyperparameters::from_log_slice(&runs[best].0)),
                best_objective: runs[best].1.final_objective,
                gradient_norm: runs[best].1.grad_norm,
            })
        }
    }
}

/// On-disk form of a fitted field. The factorization is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedFieldRecord {
    pub config: StationConfig,
    pub data_offset: f64,
    pub hyperparameters: Hyperparameters,
    pub dataset: SensorDataset,
}

impl From<&TrainedField> for TrainedFieldRecord {
    fn from(f: &TrainedField) -> Self {
        TrainedFieldRecord {
            config: f.config.clone(),
            data_offset: f.data_offset,
            hyperparameters: f.hyper.clone(),
            dataset: f.dataset.clone(),
        }
    }
}

impl TryFrom<TrainedFieldRecord> for TrainedField {
    type Error = Error;
    fn try_from(r: TrainedFieldRecord) -> Result<Self> {
        r.config.validate()?;
        r.hyperparameters
            .validate(Some(r.config.wave_numbers.len()))?;
        if !r.data_offset.is_finite() {
            return Err(Error::InvalidInput("data_offset is not finite".into()));
        }
        TrainedField::build(r.dataset, r.config, r.hyperparameters, r.data_offset)
    }
}

impl Serialize for TrainedField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TrainedFieldRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrainedField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        TrainedField::try_from(TrainedFieldRecord::deserialize(d)?)
            .map_err(serde::de::Error::custom)
    }
}
