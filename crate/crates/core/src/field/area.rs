//! Bayesian area average of a fitted field.
//!
//! The area average is a linear functional of the field, so it is Gaussian
//! under the predictive posterior. Integrating the kernel over a full period
//! in angle removes every sine and cosine term, leaving `2π λ₁²`; only the
//! radial integrals need quadrature.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;

use super::kernel::{radial_kernel, Hyperparameters};
use super::{StationConfig, TrainedField};
use crate::error::{Error, Result};
use crate::gaussian::{AreaAverage, Location};
use crate::quadrature::{integrate_with_breaks, QuadratureSettings};

/// `(r_o − r_i) / (π (r_o² − r_i²))`, which makes the average of 1 equal 1.
pub fn normalizing_constant(config: &StationConfig) -> f64 {
    let (ri, ro) = (config.inner_radius, config.outer_radius);
    (ro - ri) / (PI * (ro * ro - ri * ri))
}

/// Radial area weight `v(r) = r (r_o − r_i) + r_i`.
pub fn radial_weight(r: f64, config: &StationConfig) -> f64 {
    r * (config.outer_radius - config.inner_radius) + config.inner_radius
}

/// Kernel integrals needed by the area average: `w̃_i` for each sensor and
/// the double integral `ω`.
#[derive(Debug, Clone)]
pub struct AreaKernelIntegrals {
    pub sensor_weights: DVector<f64>,
    pub omega: f64,
}

pub fn area_kernel_integrals(
    sensors: &[Location],
    hyper: &Hyperparameters,
    config: &StationConfig,
    settings: &QuadratureSettings,
) -> Result<AreaKernelIntegrals> {
    let c = normalizing_constant(config);
    let lambda0 = hyper.fourier_variances[0];
    let sf2 = hyper.radial_signal_variance;
    let l2 = hyper.radial_lengthscale_sq;

    let l = l2.sqrt();
    // the radial kernel can be much narrower than the node spacing
    let peak = |a: f64| [a - 8.0 * l, a - 2.0 * l, a, a + 2.0 * l, a + 8.0 * l];
    let radial_row = |a: f64, tol: f64| {
        integrate_with_breaks(
            |r| radial_kernel(a, r, sf2, l2) * radial_weight(r, config),
            0.0,
            1.0,
            &peak(a),
            &QuadratureSettings {
                abs_tol: tol,
                ..*settings
            },
        )
    };

    let mut w = DVector::zeros(sensors.len());
    for (i, s) in sensors.iter().enumerate() {
        w[i] = c * TAU * lambda0 * radial_row(s.r, settings.abs_tol)?.value;
    }

    // nested: the inner tolerance is tightened so its noise does not drive
    // the outer refinement
    let inner_tol = settings.abs_tol * 1e-3;
    let inner_failure = std::cell::Cell::new(None::<Error>);
    let edges = [2.0 * l, 8.0 * l, 1.0 - 8.0 * l, 1.0 - 2.0 * l];
    let outer = integrate_with_breaks(
        |r| match radial_row(r, inner_tol) {
            Ok(v) => v.value * radial_weight(r, config),
            Err(e) => {
                inner_failure.set(Some(e));
                f64::NAN
            }
        },
        0.0,
        1.0,
        &edges,
        settings,
    );
    if let Some(e) = inner_failure.take() {
        return Err(e);
    }
    let omega = c * c * TAU * TAU * lambda0 * outer?.value;
    Ok(AreaKernelIntegrals {
        sensor_weights: w,
        omega,
    })
}

/// Area average `N(μ_A, σ²_A)` of the predictive posterior of `field`.
pub fn area_average(field: &TrainedField, settings: &QuadratureSettings) -> Result<AreaAverage> {
    let ints = area_kernel_integrals(
        field.dataset().locations(),
        field.hyperparameters(),
        field.config(),
        settings,
    )?;
    let mean = field.data_offset() + ints.sensor_weights.dot(field.alpha());
    let v = field
        .cholesky()
        .l_dirty()
        .solve_lower_triangular(&ints.sensor_weights)
        .ok_or_else(|| Error::NotPositiveDefinite {
            matrix: "K + Σ".into(),
        })?;
    let mut variance = ints.omega - v.norm_squared();
    let floor = 1e-10 * ints.omega.abs().max(1.0);
    if variance < 0.0 {
        if variance < -floor {
            return Err(Error::NegativeVariance(variance));
        }
        variance = 0.0;
    }
    Ok(AreaAverage { mean, variance })
}
