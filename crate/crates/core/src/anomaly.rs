//! Per-sensor distances between a baseline and an observed field, percentile
//! thresholds calibrated on a corpus, and binary classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fit_map, OptimizerSettings, SensorDataset, StationConfig, TrainedField};
use crate::gaussian::{Location, PredictiveSource};

/// Distances above `-DISTANCE_CLAMP` but below zero are roundoff.
pub const DISTANCE_CLAMP: f64 = 1e-12;

/// Default relative guard on area-average means, scaled by the largest
/// reading.
pub const DEFAULT_MEAN_EPSILON: f64 = 1e-8;

/// Name of the percentile rule written into threshold files.
pub const PERCENTILE_RULE: &str = "linear interpolation between closest ranks (type 7)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceVector {
    pub sensor_locations: Vec<Location>,
    pub distances: Vec<f64>,
    pub baseline_label: String,
    pub observed_label: String,
}

impl DistanceVector {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.distances
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceOptions {
    /// Optional per-sensor weights multiplying each component.
    pub weights: Option<Vec<f64>>,
    /// Relative guard on `|μ_A|`; scaled by the field's largest reading.
    pub mean_epsilon: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            weights: None,
            mean_epsilon: DEFAULT_MEAN_EPSILON,
        }
    }
}

fn checked_area_mean(source: &dyn PredictiveSource, which: &str, eps: f64) -> Result<f64> {
    let mean = source.area_average_mean()?;
    let epsilon = eps * source.value_scale().max(f64::MIN_POSITIVE);
    if !(mean.abs() > epsilon) {
        return Err(Error::NearZeroAreaAverage {
            which: format!("{which} `{}`", source.label()),
            value: mean,
            epsilon,
        });
    }
    Ok(mean)
}

/// Distance for one sensor from the two marginals and the two area-average
/// means.
pub fn sensor_distance(
    mean_a: f64,
    var_a: f64,
    area_a: f64,
    mean_b: f64,
    var_b: f64,
    area_b: f64,
) -> f64 {
    let dm = mean_a / area_a - mean_b / area_b;
    dm * dm + var_a / (area_a * area_a) + var_b / (area_b * area_b)
        - 2.0 * (var_a * var_b).sqrt() / (area_a * area_b)
}

/// Normalized per-sensor 1D Wasserstein distances between `baseline` and
/// `observed`, evaluated at `sensor_locations`.
pub fn distance_vector(
    baseline: &dyn PredictiveSource,
    observed: &dyn PredictiveSource,
    sensor_locations: &[Location],
    options: &DistanceOptions,
) -> Result<DistanceVector> {
    if sensor_locations.is_empty() {
        return Err(Error::InvalidInput("no sensor locations given".into()));
    }
    if let Some(l) = sensor_locations
        .iter()
        .find(|l| !(0.0..=1.0).contains(&l.r))
    {
        return Err(Error::InvalidInput(format!(
            "sensor span r = {} outside [0, 1]",
            l.r
        )));
    }
    if let Some(w) = &options.weights {
        if w.len() != sensor_locations.len() {
            return Err(Error::DimensionMismatch {
                expected: sensor_locations.len(),
                found: w.len(),
            });
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "sensor weights must be nonnegative".into(),
            ));
        }
    }
    let area_a = checked_area_mean(baseline, "baseline", options.mean_epsilon)?;
    let area_b = checked_area_mean(observed, "observed", options.mean_epsilon)?;
    let ma = baseline.marginals(sensor_locations)?;
    let mb = observed.marginals(sensor_locations)?;
    let distances = ma
        .iter()
        .zip(&mb)
        .enumerate()
        .map(|(j, (a, b))| {
            let d = sensor_distance(a.mean, a.variance, area_a, b.mean, b.variance, area_b);
            let d = if (-DISTANCE_CLAMP..0.0).contains(&d) {
                0.0
            } else {
                d
            };
            options.weights.as_ref().map_or(d, |w| w[j] * d)
        })
        .collect();
    Ok(DistanceVector {
        sensor_locations: sensor_locations.iter().map(|l| l.canonical()).collect(),
        distances,
        baseline_label: baseline.label(),
        observed_label: observed.label(),
    })
}

/// Percentile of `values` by linear interpolation between closest ranks
/// (Hyndman–Fan type 7, the numpy default). `percentile` is in `[0, 100]`.
pub fn percentile(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty pool".into()));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidInput(format!(
            "percentile {percentile} outside [0, 100]"
        )));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("pool contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * percentile / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub station_id: String,
    pub percentile: f64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<f64>>,
    pub pair_count: usize,
    #[serde(default = "default_rule")]
    pub percentile_rule: String,
}

fn default_rule() -> String {
    PERCENTILE_RULE.to_string()
}

#[derive(Debug, Clone)]
pub struct CalibrationSettings {
    pub percentile: f64,
    /// Also pool the distances evaluated at the first dataset's sensors.
    pub both_orientations: bool,
    pub optimizer: OptimizerSettings,
    pub distance: DistanceOptions,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            percentile: 95.0,
            both_orientations: false,
            optimizer: OptimizerSettings::default(),
            distance: DistanceOptions::default(),
        }
    }
}

/// Fits every dataset once, each with the same optimizer seed.
pub fn fit_all(
    datasets: &[SensorDataset],
    config: &StationConfig,
    optimizer: &OptimizerSettings,
) -> Result<Vec<TrainedField>> {
    datasets
        .par_iter()
        .map(|d| {
            fit_map(d, config, optimizer).map_err(|e| Error::FitFailed {
                label: d.label().to_string(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Pools distances over all unordered pairs of already-fitted fields.
/// Pair `(i, j)` with `i < j` is evaluated at the sensors of `j`.
pub fn pairwise_pool(
    fields: &[TrainedField],
    both_orientations: bool,
    options: &DistanceOptions,
) -> Result<Vec<f64>> {
    let pairs: Vec<(usize, usize)> = (0..fields.len())
        .flat_map(|i| ((i + 1)..fields.len()).map(move |j| (i, j)))
        .collect();
    let parts: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&fields[i], &fields[j]);
            let mut d = distance_vector(a, b, b.dataset().locations(), options)?.distances;
            if both_orientations {
                d.extend(distance_vector(b, a, a.dataset().locations(), options)?.distances);
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Calibrates the per-station threshold `τ` as a percentile of all pairwise
/// per-sensor distances in a corpus of standard datasets.
pub fn calibrate_threshold(
    station_id: &str,
    datasets: &[SensorDataset],
    config: &StationConfig,
    settings: &CalibrationSettings,
) -> Result<ThresholdModel> {
    if datasets.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "calibration needs at least 2 datasets, got {}",
            datasets.len()
        )));
    }
    let fields = fit_all(datasets, config, &settings.optimizer)?;
    calibrate_from_fields(station_id, &fields, settings)
}

pub fn calibrate_from_fields(
    station_id: &str,
    fields: &[TrainedField],
    settings: &CalibrationSettings,
) -> Result<ThresholdModel> {
    if fields.len() < 2 {
        return Err(Error::InvalidInput(
            "calibration needs at least 2 fields".into(),
        ));
    }
    let pool = pairwise_pool(fields, settings.both_orientations, &settings.distance)?;
    let tau = percentile(&pool, settings.percentile)?;
    let q = fields.len();
    Ok(ThresholdModel {
        station_id: station_id.to_string(),
        percentile: settings.percentile,
        tau,
        pool: Some(pool),
        pair_count: q * (q - 1) / 2,
        percentile_rule: PERCENTILE_RULE.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorVerdict {
    pub r: f64,
    pub theta: f64,
    pub distance: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub station_id: Option<String>,
    pub baseline_label: String,
    pub observed_label: String,
    pub tau: f64,
    pub sensors: Vec<SensorVerdict>,
}

impl AnomalyReport {
    pub fn flags(&self) -> Vec<bool> {
        self.sensors.iter().map(|s| s.flag).collect()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.sensors
            .iter()
            .enumerate()
            .filter(|(_, s)| s.flag)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn any_flagged(&self) -> bool {
        self.sensors.iter().any(|s| s.flag)
    }
}

/// Flags sensor `i` as anomalous iff `d_i >= τ`.
pub fn classify(distances: &DistanceVector, tau: f64) -> Result<AnomalyReport> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be >= 0, got {tau}"
        )));
    }
    Ok(AnomalyReport {
        station_id: None,
        baseline_label: distances.baseline_label.clone(),
        observed_label: distances.observed_label.clone(),
        tau,
        sensors: distances
            .sensor_locations
            .iter()
            .zip(&distances.distances)
            .map(|(l, &d)| SensorVerdict {
                r: l.r,
                theta: l.theta,
                distance: d,
                flag: d >= tau,
            })
            .collect(),
    })
}
