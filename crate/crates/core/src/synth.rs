//! Synthetic fields from Dirichlet-weighted barycenters of vertex fields, and
//! noisy measurement draws from any field.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::SensorDataset;
use crate::gaussian::{GaussianField, Location, PredictiveSource};
use crate::linalg::sqrtm_psd;
use crate::ot::{barycenter, BarycenterSettings};

/// Independent generator for sample `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct SimplexSampler {
    vertices: Vec<GaussianField>,
    concentration: Vec<f64>,
    seed: u64,
    barycenter: BarycenterSettings,
}

impl SimplexSampler {
    /// Sampler with uniform concentration `(1, …, 1)`.
    pub fn new(vertices: Vec<GaussianField>, seed: u64) -> Result<Self> {
        let k = vertices.len();
        Self::with_concentration(vertices, vec![1.0; k], seed)
    }

    pub fn with_concentration(
        vertices: Vec<GaussianField>,
        concentration: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 vertex fields, got {}",
                vertices.len()
            )));
        }
        for v in &vertices[1..] {
            vertices[0].check_same_grid(v)?;
        }
        if concentration.len() != vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: vertices.len(),
                found: concentration.len(),
            });
        }
        if concentration.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "concentration entries must be positive: {concentration:?}"
            )));
        }
        Ok(SimplexSampler {
            vertices,
            concentration,
            seed,
            barycenter: BarycenterSettings::default(),
        })
    }

    pub fn with_barycenter_settings(mut self, settings: BarycenterSettings) -> Self {
        self.barycenter = settings;
        self
    }

    pub fn vertices(&self) -> &[GaussianField] {
        &self.vertices
    }

    pub fn concentration(&self) -> &[f64] {
        &self.concentration
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dirichlet weight vector number `index`.
    pub fn weights_at(&self, index: u64) -> Vec<f64> {
        dirichlet(&self.concentration, &mut substream(self.seed, index))
    }

    pub fn sample_weights(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.weights_at(i))
            .collect()
    }

    /// `n` barycenters of the vertices under Dirichlet weights.
    pub fn generate_synthetic(&self, n: usize) -> Result<Vec<GaussianField>> {
        self.sample_weights(n)
            .into_par_iter()
            .map(|w| barycenter(&self.vertices, &w, &self.barycenter).map(|b| b.field))
            .collect()
    }
}

/// One Dirichlet draw. Gammas are drawn in log space,
/// `log G = log Gamma(α + 1) + ln(U) / α`, so tiny concentrations do not
/// underflow to an all-zero vector.
pub fn dirichlet<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("shape > 1").sample(rng);
            let u: f64 = rng.random::<f64>();
            // random() is in [0, 1); 1 − u is in (0, 1]
            g.ln() + (1.0 - u).ln() / a
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    // push the rounding residue into the largest entry
    let resid = 1.0 - w.iter().sum::<f64>();
    let imax = (0..w.len())
        .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        .unwrap_or(0);
    w[imax] += resid;
    w
}

/// One joint draw of `source` at `locations` plus i.i.d. noise of variance
/// `noise_variance`. With zero noise the dataset is marked noise free.
pub fn sample_measurements(
    source: &dyn PredictiveSource,
    locations: &[Location],
    noise_variance: f64,
    seed: u64,
    label: impl Into<String>,
) -> Result<SensorDataset> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise variance must be >= 0, got {noise_variance}"
        )));
    }
    let locations = crate::field::validate_locations(locations.to_vec())?;
    let joint = source.joint(&locations)?;
    let root = sqrtm_psd(joint.covariance())?;
    let mut rng = substream(seed, 0);
    let z = DVector::from_fn(locations.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let draw = joint.mean() + root * z;
    let sd = noise_variance.sqrt();
    let values: Vec<f64> = draw
        .iter()
        .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    if noise_variance > 0.0 {
        SensorDataset::new(locations, values, noise_variance, label)
    } else {
        SensorDataset::noise_free(locations, values, label)
    }
}
