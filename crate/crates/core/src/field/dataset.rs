use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Location, LOCATION_EPS};

/// Scattered sensor readings over one annular station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRecord", into = "DatasetRecord")]
pub struct SensorDataset {
    locations: Vec<Location>,
    values: Vec<f64>,
    noise_variance: f64,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    label: String,
    noise_variance: f64,
    locations: Vec<Location>,
    values: Vec<f64>,
}

impl TryFrom<DatasetRecord> for SensorDataset {
    type Error = Error;
    fn try_from(r: DatasetRecord) -> Result<Self> {
        if r.noise_variance == 0.0 {
            SensorDataset::noise_free(r.locations, r.values, r.label)
        } else {
            SensorDataset::new(r.locations, r.values, r.noise_variance, r.label)
        }
    }
}

impl From<SensorDataset> for DatasetRecord {
    fn from(d: SensorDataset) -> Self {
        DatasetRecord {
            label: d.label,
            noise_variance: d.noise_variance,
            locations: d.locations,
            values: d.values,
        }
    }
}

impl SensorDataset {
    /// Validates and canonicalizes a dataset: at least two sensors, spans in
    /// `[0, 1]`, finite readings, angles wrapped into `[0, 2π)`, no duplicate
    /// locations and a positive noise variance.
    pub fn new(
        locations: Vec<Location>,
        values: Vec<f64>,
        noise_variance: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::InvalidDataset(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Self::build(locations, values, noise_variance, label.into())
    }

    /// A dataset without measurement noise. Only synthetic ground truth is
    /// noise free; such datasets cannot be fitted.
    pub fn noise_free(
        locations: Vec<Location>,
        values: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::build(locations, values, 0.0, label.into())
    }

    fn build(
        locations: Vec<Location>,
        values: Vec<f64>,
        noise_variance: f64,
        label: String,
    ) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::InvalidDataset(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 sensors, got {}",
                locations.len()
            )));
        }
        let locations = validate_locations(locations)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("reading {i} is not finite")));
        }
        Ok(SensorDataset {
            locations,
            values,
            noise_variance,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn mean_value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Copy with each reading transformed; locations are kept.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> SensorDataset {
        let mut out = self.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        out
    }
}

/// Checks spans, canonicalizes angles and rejects duplicates.
pub fn validate_locations(locations: Vec<Location>) -> Result<Vec<Location>> {
    let mut out = Vec::with_capacity(locations.len());
    for (i, loc) in locations.into_iter().enumerate() {
        if !loc.r.is_finite() || !loc.theta.is_finite() {
            return Err(Error::InvalidDataset(format!("location {i} is not finite")));
        }
        if !(0.0..=1.0).contains(&loc.r) {
            return Err(Error::InvalidDataset(format!(
                "location {i}: span r = {} outside [0, 1]",
                loc.r
            )));
        }
        let loc = loc.canonical();
        if let Some(j) = out
            .iter()
            .position(|o: &Location| o.coincides(&loc, LOCATION_EPS))
        {
            return Err(Error::InvalidDataset(format!(
                "locations {j} and {i} are duplicates"
            )));
        }
        out.push(loc);
    }
    Ok(out)
}

/// Per-station model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub wave_numbers: Vec<u32>,
    pub noise_variance: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    #[serde(default = "default_prior_scale")]
    pub prior_scale: f64,
}

fn default_prior_scale() -> f64 {
    1.0
}

impl StationConfig {
    pub fn new(
        wave_numbers: Vec<u32>,
        noise_variance: f64,
        inner_radius: f64,
        outer_radius: f64,
    ) -> Result<Self> {
        let c = StationConfig {
            wave_numbers,
            noise_variance,
            inner_radius,
            outer_radius,
            prior_scale: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_prior_scale(mut self, prior_scale: f64) -> Result<Self> {
        self.prior_scale = prior_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wave_numbers.is_empty() {
            return Err(Error::InvalidConfig("wave_numbers is empty".into()));
        }
        if self.wave_numbers[0] < 1 {
            return Err(Error::InvalidConfig("wave numbers must be >= 1".into()));
        }
        if self.wave_numbers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "wave numbers must be strictly increasing".into(),
            ));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::InvalidConfig(
                "noise_variance must be positive".into(),
            ));
        }
        if !(self.inner_radius > 0.0) || !(self.outer_radius > self.inner_radius) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < inner_radius < outer_radius, got {} and {}",
                self.inner_radius, self.outer_radius
            )));
        }
        if !self.outer_radius.is_finite() {
            return Err(Error::InvalidConfig("outer_radius is not finite".into()));
        }
        if !(self.prior_scale > 0.0) || !self.prior_scale.is_finite() {
            return Err(Error::InvalidConfig("prior_scale must be positive".into()));
        }
        Ok(())
    }

    /// Number of Fourier features, `2k + 1`.
    pub fn n_features(&self) -> usize {
        2 * self.wave_numbers.len() + 1
    }

    /// Number of hyperparameters, `2k + 3`.
    pub fn n_hyperparameters(&self) -> usize {
        self.n_features() + 2
    }
}
