//! Finite-dimensional Gaussians indexed by annulus locations.
//!
//! A [`GaussianField`] is what every other part of the crate exchanges: the
//! predictive posterior of a fitted field on some location set, a Wasserstein
//! barycenter on a shared grid, or a synthetic sample drawn from the simplex
//! spanned by a few baselines.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two locations closer than this in both coordinates are the same point.
pub const LOCATION_EPS: f64 = 1e-12;

/// A point on the annulus: nondimensional span `r` in `[0, 1]` and angle
/// `theta` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Location {
    pub r: f64,
    pub theta: f64,
}

impl Location {
    pub fn new(r: f64, theta: f64) -> Self {
        Location { r, theta }
    }

    /// Same location with `theta` wrapped into `[0, 2π)`.
    pub fn canonical(self) -> Self {
        let mut theta = self.theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        Location { r: self.r, theta }
    }

    pub fn coincides(&self, other: &Location, eps: f64) -> bool {
        (self.r - other.r).abs() <= eps && (self.theta - other.theta).abs() <= eps
    }
}

impl From<[f64; 2]> for Location {
    fn from(v: [f64; 2]) -> Self {
        Location {
            r: v[0],
            theta: v[1],
        }
    }
}

impl From<Location> for [f64; 2] {
    fn from(l: Location) -> Self {
        [l.r, l.theta]
    }
}

/// A univariate Gaussian, used for area averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaAverage {
    pub mean: f64,
    pub variance: f64,
}

impl AreaAverage {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Marginal mean and variance at a single location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    locations: Vec<Location>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    area_average: Option<AreaAverage>,
}

impl GaussianField {
    /// Builds a field, checking shapes and symmetrizing the covariance.
    ///
    /// The covariance must be symmetric to `1e-10` relative and have no
    /// eigenvalue below `-1e-10 * trace / N`.
    pub fn new(
        locations: Vec<Location>,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = locations.len();
        if n == 0 {
            return Err(Error::InvalidInput("field has no locations".into()));
        }
        if mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: mean.len(),
            });
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: covariance.nrows().max(covariance.ncols()),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "field moments contain non-finite values".into(),
            ));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let covariance = crate::linalg::symmetrize(&covariance);
        let trace = covariance.trace();
        let floor = -1e-10 * trace.abs() / n as f64;
        let min_eig = covariance.clone().symmetric_eigenvalues().min();
        if min_eig < floor {
            return Err(Error::NotPsd {
                eigenvalue: min_eig,
                threshold: floor,
            });
        }
        Ok(GaussianField {
            locations,
            mean,
            covariance,
            area_average: None,
        })
    }

    /// Skips the eigenvalue check; for results of operations that produce
    /// PSD matrices by construction.
    pub(crate) fn from_parts(
        locations: Vec<Location>,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Self {
        debug_assert_eq!(locations.len(), mean.len());
        debug_assert_eq!(covariance.nrows(), mean.len());
        GaussianField {
            locations,
            mean,
            covariance,
            area_average: None,
        }
    }

    pub fn with_area_average(mut self, area_average: AreaAverage) -> Self {
        self.area_average = Some(area_average);
        self
    }

    pub fn set_area_average(&mut self, area_average: Option<AreaAverage>) {
        self.area_average = area_average;
    }

    pub fn dim(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn area_average(&self) -> Option<AreaAverage> {
        self.area_average
    }

    pub fn marginal(&self, index: usize) -> Marginal {
        Marginal {
            mean: self.mean[index],
            variance: self.covariance[(index, index)],
        }
    }

    /// Index of the grid location within `eps` of `loc`, if any.
    pub fn find_location(&self, loc: &Location, eps: f64) -> Option<usize> {
        let loc = loc.canonical();
        self.locations.iter().position(|g| {
            if (g.r - loc.r).abs() > eps {
                return false;
            }
            // angles near 0 and 2π are the same point
            let d = (g.theta - loc.theta).abs();
            d <= eps || (TAU - d).abs() <= eps
        })
    }

    /// Restriction of the field to a subset of its grid.
    pub fn restrict(&self, locations: &[Location], eps: f64) -> Result<GaussianField> {
        let idx = locations
            .iter()
            .map(|l| {
                self.find_location(l, eps).ok_or_else(|| {
                    Error::GridMismatch(format!(
                        "location (r={}, theta={}) is not on the field grid",
                        l.r, l.theta
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = idx.len();
        let mean = DVector::from_fn(n, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.covariance[(idx[i], idx[j])]);
        Ok(GaussianField::from_parts(
            idx.iter().map(|&i| self.locations[i]).collect(),
            mean,
            cov,
        ))
    }

    /// Checks that `other` is indexed by the same locations, to `LOCATION_EPS`.
    pub fn check_same_grid(&self, other: &GaussianField) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        for (i, (a, b)) in self.locations.iter().zip(&other.locations).enumerate() {
            if !a.coincides(b, LOCATION_EPS) {
                return Err(Error::GridMismatch(format!(
                    "location {i} differs: ({}, {}) vs ({}, {})",
                    a.r, a.theta, b.r, b.theta
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute mean, used to scale near-zero checks.
    pub fn value_scale(&self) -> f64 {
        self.mean.amax()
    }
}

/// On-disk form of a [`GaussianField`]: `locations`, `mean`, row-major
/// `covariance` and an optional `area_average`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFieldRecord {
    pub locations: Vec<Location>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_average: Option<AreaAverage>,
}

impl From<&GaussianField> for GaussianFieldRecord {
    fn from(f: &GaussianField) -> Self {
        let n = f.dim();
        GaussianFieldRecord {
            locations: f.locations.clone(),
            mean: f.mean.iter().copied().collect(),
            covariance: (0..n)
                .map(|i| (0..n).map(|j| f.covariance[(i, j)]).collect())
                .collect(),
            area_average: f.area_average,
        }
    }
}

impl TryFrom<GaussianFieldRecord> for GaussianField {
    type Error = Error;

    fn try_from(rec: GaussianFieldRecord) -> Result<Self> {
        let n = rec.mean.len();
        if rec.covariance.len() != n || rec.covariance.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!(
                "covariance must be {n}x{n} to match the mean"
            )));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| rec.covariance[i][j]);
        let mut field = GaussianField::new(rec.locations, DVector::from_vec(rec.mean), cov)?;
        field.area_average = rec.area_average;
        Ok(field)
    }
}

impl Serialize for GaussianField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianFieldRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = GaussianFieldRecord::deserialize(d)?;
        GaussianField::try_from(rec).map_err(serde::de::Error::custom)
    }
}

/// Anything that can be queried for a Gaussian at annulus locations: a
/// fitted field or a stored [`GaussianField`] on a grid.
pub trait PredictiveSource {
    /// Joint Gaussian at `locations`.
    fn joint(&self, locations: &[Location]) -> Result<GaussianField>;

    /// Marginal moments at `locations`; cross-covariances are not formed.
    fn marginals(&self, locations: &[Location]) -> Result<Vec<Marginal>>;

    /// Mean of the Bayesian area average.
    fn area_average_mean(&self) -> Result<f64>;

    /// Typical magnitude of the readings.
    fn value_scale(&self) -> f64;

    fn label(&self) -> String;
}

/// Tolerance used to match query locations against a stored grid.
pub const GRID_MATCH_EPS: f64 = 1e-9;

impl PredictiveSource for GaussianField {
    fn joint(&self, locations: &[Location]) -> Result<GaussianField> {
        self.restrict(locations, GRID_MATCH_EPS)
    }

    fn marginals(&self, locations: &[Location]) -> Result<Vec<Marginal>> {
        locations
            .iter()
            .map(|l| {
                self.find_location(l, GRID_MATCH_EPS)
                    .map(|i| self.marginal(i))
                    .ok_or_else(|| {
                        Error::GridMismatch(format!(
                            "sensor (r={}, theta={}) is not on the baseline grid",
                            l.r, l.theta
                        ))
                    })
            })
            .collect()
    }

    fn area_average_mean(&self) -> Result<f64> {
        self.area_average
            .map(|a| a.mean)
            .ok_or_else(|| Error::InvalidInput("gaussian field carries no area average".into()))
    }

    fn value_scale(&self) -> f64 {
        GaussianField::value_scale(self)
    }

    fn label(&self) -> String {
        "gaussian-field".into()
    }
}
