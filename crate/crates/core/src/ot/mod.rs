//! Closed-form optimal transport between Gaussians with quadratic cost:
//! Bures–Wasserstein distances, Monge maps, displacement geodesics and
//! fixed-point barycenters.

mod barycenter;

use nalgebra::{DMatrix, DVector};

pub use barycenter::{
    barycenter, barycenter_area_average, barycenter_moments, validate_weights, BarycenterResult,
    BarycenterSettings, FixedPointScheme, MomentsBarycenter, AREA_AVERAGE_RULE,
};

use crate::error::{Error, Result};
use crate::gaussian::{AreaAverage, GaussianField};
use crate::linalg::{sqrt_and_inv_sqrt, sqrtm_psd, symmetrize_in_place, trace_sqrt_psd};

pub use crate::linalg::sqrtm_spd;

/// Roundoff allowance for negative squared distances, relative to the scale
/// `‖μ_α − μ_β‖² + tr Σ_α + tr Σ_β`.
const NEGATIVE_DISTANCE_TOL: f64 = 1e-10;

fn check_moments(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<()> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            found: cov.nrows(),
        });
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between `N(μ_α, Σ_α)` and `N(μ_β, Σ_β)`:
/// `‖μ_α − μ_β‖² + tr Σ_α + tr Σ_β − 2 tr (Σ_α^{1/2} Σ_β Σ_α^{1/2})^{1/2}`.
pub fn bures_wasserstein_sq(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    check_moments(mean_a, cov_a)?;
    check_moments(mean_b, cov_b)?;
    if mean_a.len() != mean_b.len() {
        return Err(Error::DimensionMismatch {
            expected: mean_a.len(),
            found: mean_b.len(),
        });
    }
    let root_a = sqrtm_psd(cov_a)?;
    // validates Σ_β as PSD as well
    crate::linalg::clamped_eigen(cov_b, crate::linalg::psd_floor(cov_b))?;
    let mut inner = &root_a * cov_b * &root_a;
    symmetrize_in_place(&mut inner);
    let cross = trace_sqrt_psd(&inner)?;
    let mean_term = (mean_a - mean_b).norm_squared();
    let (ta, tb) = (cov_a.trace(), cov_b.trace());
    let value = mean_term + ta + tb - 2.0 * cross;
    clamp_distance(value, mean_term + ta + tb)
}

fn clamp_distance(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        return Ok(value);
    }
    if value >= -NEGATIVE_DISTANCE_TOL * scale.abs() {
        Ok(0.0)
    } else {
        Err(Error::NegativeDistance { value, scale })
    }
}

/// Squared 2-Wasserstein distance between two fields on the same grid.
pub fn wasserstein2_sq(alpha: &GaussianField, beta: &GaussianField) -> Result<f64> {
    alpha.check_same_grid(beta)?;
    bures_wasserstein_sq(
        alpha.mean(),
        alpha.covariance(),
        beta.mean(),
        beta.covariance(),
    )
}

/// Squared 2-Wasserstein distance between univariate Gaussians,
/// `(μ_α − μ_β)² + (σ_α − σ_β)²`.
pub fn wasserstein2_sq_1d(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64) -> Result<f64> {
    for v in [var_a, var_b] {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::NegativeVariance(v));
        }
    }
    let dm = mean_a - mean_b;
    let ds = var_a.sqrt() - var_b.sqrt();
    Ok(dm * dm + ds * ds)
}

/// Optimal affine map `x ↦ μ_β + R (x − μ_α)` pushing one Gaussian onto
/// another.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub linear_part: DMatrix<f64>,
    pub source_mean: DVector<f64>,
    pub target_mean: DVector<f64>,
}

impl TransportMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.target_mean + &self.linear_part * (x - &self.source_mean)
    }

    /// `R Σ Rᵀ`.
    pub fn push_covariance(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.linear_part * cov * self.linear_part.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    /// Point on the displacement interpolation at pseudo-time `t`.
    pub fn interpolate(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        x * (1.0 - t) + self.apply(x) * t
    }
}

/// Monge map on raw moments, with
/// `R = Σ_α^{-1/2} (Σ_α^{1/2} Σ_β Σ_α^{1/2})^{1/2} Σ_α^{-1/2}`.
pub fn transport_map_moments(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<TransportMap> {
    check_moments(mean_a, cov_a)?;
    check_moments(mean_b, cov_b)?;
    if mean_a.len() != mean_b.len() {
        return Err(Error::DimensionMismatch {
            expected: mean_a.len(),
            found: mean_b.len(),
        });
    }
    let (root, inv_root) = sqrt_and_inv_sqrt(cov_a)?;
    let mut inner = &root * cov_b * &root;
    symmetrize_in_place(&mut inner);
    let middle = sqrtm_psd(&inner)?;
    let mut r = &inv_root * middle * &inv_root;
    symmetrize_in_place(&mut r);
    Ok(TransportMap {
        linear_part: r,
        source_mean: mean_a.clone(),
        target_mean: mean_b.clone(),
    })
}

pub fn transport_map(alpha: &GaussianField, beta: &GaussianField) -> Result<TransportMap> {
    alpha.check_same_grid(beta)?;
    transport_map_moments(
        alpha.mean(),
        alpha.covariance(),
        beta.mean(),
        beta.covariance(),
    )
}

/// Displacement interpolation between `alpha` (`t = 0`) and `beta` (`t = 1`).
///
/// When both endpoints carry area averages, the result carries the 1D
/// interpolation of them.
pub fn geodesic(alpha: &GaussianField, beta: &GaussianField, t: f64) -> Result<GaussianField> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t = {t} is outside [0, 1]")));
    }
    let map = transport_map(alpha, beta)?;
    let n = alpha.dim();
    let a = DMatrix::<f64>::identity(n, n) * (1.0 - t) + &map.linear_part * t;
    let mut cov = a.transpose() * alpha.covariance() * &a;
    symmetrize_in_place(&mut cov);
    let mean = alpha.mean() * (1.0 - t) + beta.mean() * t;
    let mut out = GaussianField::from_parts(alpha.locations().to_vec(), mean, cov);
    if let (Some(x), Some(y)) = (alpha.area_average(), beta.area_average()) {
        out.set_area_average(Some(interpolate_area_average(x, y, t)));
    }
    Ok(out)
}

fn interpolate_area_average(x: AreaAverage, y: AreaAverage, t: f64) -> AreaAverage {
    if t == 0.0 {
        return x;
    }
    if t == 1.0 {
        return y;
    }
    let std = (1.0 - t) * x.std() + t * y.std();
    AreaAverage {
        mean: (1.0 - t) * x.mean + t * y.mean,
        variance: std * std,
    }
}
