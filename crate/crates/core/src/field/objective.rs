//! Log posterior of the hyperparameters with the latent field marginalized.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::kernel::{AnnulusKernel, FeaturedLocations, Hyperparameters};
use super::{SensorDataset, StationConfig};
use crate::error::Result;
use crate::gaussian::Location;

/// Log density of a half-normal with variance parameter `scale` at `x >= 0`.
pub fn log_half_normal(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 - 0.5 * (2.0 * PI * scale).ln() - x * x / (2.0 * scale)
}

/// `log N(t − t̄ | 0, K(ψ) + σ²I) + Σ log N⁺(ψ_i; prior_scale)`.
///
/// Returns `-inf` when `K + σ²I` cannot be factorized.
pub fn log_map_objective(
    hyper: &Hyperparameters,
    dataset: &SensorDataset,
    config: &StationConfig,
) -> Result<f64> {
    hyper.validate(Some(config.wave_numbers.len()))?;
    let offset = dataset.mean_value();
    let residuals: Vec<f64> = dataset.values().iter().map(|v| v - offset).collect();
    let problem = MapProblem::new(
        dataset.locations(),
        &residuals,
        dataset.noise_variance(),
        config,
    );
    Ok(problem.objective(hyper))
}

/// Precomputed pieces of the MAP objective for one dataset.
pub(crate) struct MapProblem<'a> {
    locations: FeaturedLocations,
    residuals: DVector<f64>,
    noise_variance: f64,
    config: &'a StationConfig,
    sq_dist: DMatrix<f64>,
}

impl<'a> MapProblem<'a> {
    pub fn new(
        locations: &[Location],
        residuals: &[f64],
        noise_variance: f64,
        config: &'a StationConfig,
    ) -> Self {
        let f = FeaturedLocations::new(locations, &config.wave_numbers);
        let n = f.len();
        let sq_dist = DMatrix::from_fn(n, n, |i, j| {
            let d = f.r[i] - f.r[j];
            d * d
        });
        MapProblem {
            locations: f,
            residuals: DVector::from_column_slice(residuals),
            noise_variance,
            config,
            sq_dist,
        }
    }

    fn covariance(&self, hyper: &Hyperparameters) -> DMatrix<f64> {
        let k = AnnulusKernel::new(hyper, &self.config.wave_numbers);
        let mut a = k.gram_featured(&self.locations);
        for i in 0..a.nrows() {
            a[(i, i)] += self.noise_variance;
        }
        a
    }

    fn log_prior(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&v| log_half_normal(v, self.config.prior_scale))
            .sum()
    }

    fn log_marginal(
        &self,
        a: DMatrix<f64>,
    ) -> Option<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let m = a.nrows() as f64;
        let chol = nalgebra::Cholesky::new(a)?;
        let alpha = chol.solve(&self.residuals);
        let log_det: f64 = chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
            * 2.0;
        let quad = self.residuals.dot(&alpha);
        Some((
            -0.5 * quad - 0.5 * log_det - 0.5 * m * (2.0 * PI).ln(),
            chol,
        ))
    }

    pub fn objective(&self, hyper: &Hyperparameters) -> f64 {
        match self.log_marginal(self.covariance(hyper)) {
            Some((lml, _)) => lml + self.log_prior(&hyper.to_vec()),
            None => f64::NEG_INFINITY,
        }
    }

    /// Objective over `u = log ψ` including the log-Jacobian `Σ u_i`, and
    /// its gradient in `u`.
    pub fn log_space_value_and_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let psi: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        if psi.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return (f64::NEG_INFINITY, vec![f64::NAN; u.len()]);
        }
        let hyper = Hyperparameters::from_slice(&psi);
        let kernel = AnnulusKernel::new(&hyper, &self.config.wave_numbers);
        let kmat = kernel.gram_featured(&self.locations);
        let mut a = kmat.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += self.noise_variance;
        }
        let Some((lml, chol)) = self.log_marginal(a) else {
            return (f64::NEG_INFINITY, vec![f64::NAN; u.len()]);
        };
        let value = lml + self.log_prior(&psi) + u.iter().sum::<f64>();

        // d lml / dθ = ½ tr((ααᵀ − A⁻¹) ∂K/∂θ)
        let alpha = chol.solve(&self.residuals);
        let a_inv = chol.inverse();
        let b = &alpha * alpha.transpose() - a_inv;
        let n = self.locations.len();
        let nf = self.config.n_features();
        let sf2 = hyper.radial_signal_variance;
        let l2 = hyper.radial_lengthscale_sq;

        let mut grad = vec![0.0; nf + 2];
        // B ⊙ K_r, with K_r = K / k_c recovered directly from the radial factor
        let mut sum_bk = 0.0;
        let mut sum_bk_d2 = 0.0;
        let mut fourier = vec![0.0; nf];
        for j in 0..n {
            for i in 0..n {
                let bij = b[(i, j)];
                let kij = kmat[(i, j)];
                sum_bk += bij * kij;
                sum_bk_d2 += bij * kij * self.sq_dist[(i, j)];
                let kr = sf2 * (-self.sq_dist[(i, j)] / (2.0 * l2)).exp();
                let c = bij * kr;
                let fi = &self.locations.features[i];
                let fj = &self.locations.features[j];
                for q in 0..nf {
                    fourier[q] += c * fi[q] * fj[q];
                }
            }
        }
        for q in 0..nf {
            grad[q] = 0.5 * fourier[q];
        }
        grad[nf] = 0.5 * sum_bk / sf2;
        grad[nf + 1] = 0.5 * sum_bk_d2 / (2.0 * l2 * l2);

        let s = self.config.prior_scale;
        for (g, &p) in grad.iter_mut().zip(&psi) {
            // prior, chain rule to log space, Jacobian
            *g = (*g - p / s) * p + 1.0;
        }
        (value, grad)
    }
}
