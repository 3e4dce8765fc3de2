//! Product kernel on the annulus: a squared exponential in span times a
//! Fourier-series kernel in angle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Location;

/// Kernel hyperparameters, all on their natural (variance) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// One variance per Fourier feature, constant term first.
    pub fourier_variances: Vec<f64>,
    pub radial_signal_variance: f64,
    pub radial_lengthscale_sq: f64,
}

impl Hyperparameters {
    pub fn new(
        fourier_variances: Vec<f64>,
        radial_signal_variance: f64,
        radial_lengthscale_sq: f64,
    ) -> Result<Self> {
        let h = Hyperparameters {
            fourier_variances,
            radial_signal_variance,
            radial_lengthscale_sq,
        };
        h.validate(None)?;
        Ok(h)
    }

    /// Checks signs and, when given, the number of wave numbers.
    pub fn validate(&self, n_wave_numbers: Option<usize>) -> Result<()> {
        if let Some(k) = n_wave_numbers {
            if self.fourier_variances.len() != 2 * k + 1 {
                return Err(Error::InvalidHyperparameters(format!(
                    "expected {} Fourier variances for {k} wave numbers, got {}",
                    2 * k + 1,
                    self.fourier_variances.len()
                )));
            }
        }
        if self.fourier_variances.len() % 2 != 1 {
            return Err(Error::InvalidHyperparameters(
                "number of Fourier variances must be odd".into(),
            ));
        }
        if self
            .fourier_variances
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidHyperparameters(
                "Fourier variances must be finite and nonnegative".into(),
            ));
        }
        for (name, v) in [
            ("radial_signal_variance", self.radial_signal_variance),
            ("radial_lengthscale_sq", self.radial_lengthscale_sq),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidHyperparameters(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Flat parameter vector `(λ₁², …, λ²_{2k+1}, σ_f², l²)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.fourier_variances.clone();
        v.push(self.radial_signal_variance);
        v.push(self.radial_lengthscale_sq);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len();
        Hyperparameters {
            fourier_variances: v[..n - 2].to_vec(),
            radial_signal_variance: v[n - 2],
            radial_lengthscale_sq: v[n - 1],
        }
    }

    pub(crate) fn from_log_slice(u: &[f64]) -> Self {
        let v: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        Self::from_slice(&v)
    }

    /// All ones; a reasonable starting point and the prior's scale.
    pub fn unit(n_wave_numbers: usize) -> Self {
        Hyperparameters {
            fourier_variances: vec![1.0; 2 * n_wave_numbers + 1],
            radial_signal_variance: 1.0,
            radial_lengthscale_sq: 1.0,
        }
    }
}

/// `[1, sin(Ω₁θ), cos(Ω₁θ), …, sin(Ω_kθ), cos(Ω_kθ)]`.
pub fn fourier_features(theta: f64, wave_numbers: &[u32]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * wave_numbers.len() + 1);
    out.push(1.0);
    for &w in wave_numbers {
        let (s, c) = (w as f64 * theta).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Radial squared-exponential factor.
pub fn radial_kernel(r: f64, r2: f64, signal_variance: f64, lengthscale_sq: f64) -> f64 {
    let d = r - r2;
    signal_variance * (-(d * d) / (2.0 * lengthscale_sq)).exp()
}

/// `F(θ) Λ² F(θ')ᵀ` from precomputed feature rows.
#[inline]
fn circumferential_from_features(fa: &[f64], fb: &[f64], lambda_sq: &[f64]) -> f64 {
    let mut acc = 0.0;
    for q in 0..lambda_sq.len() {
        acc += lambda_sq[q] * (fa[q] * fb[q]);
    }
    acc
}

/// Full covariance between two annulus locations.
///
/// Every product is formed as `a * b` with commutative factors, so swapping
/// the arguments gives a bit-identical result.
pub fn kernel(x: Location, x2: Location, hyper: &Hyperparameters, wave_numbers: &[u32]) -> f64 {
    let fa = fourier_features(x.theta, wave_numbers);
    let fb = fourier_features(x2.theta, wave_numbers);
    radial_kernel(
        x.r,
        x2.r,
        hyper.radial_signal_variance,
        hyper.radial_lengthscale_sq,
    ) * circumferential_from_features(&fa, &fb, &hyper.fourier_variances)
}

/// Kernel bound to hyperparameters and wave numbers, caching features.
pub struct AnnulusKernel<'a> {
    pub hyper: &'a Hyperparameters,
    pub wave_numbers: &'a [u32],
}

/// Locations with their Fourier feature rows precomputed.
pub(crate) struct FeaturedLocations {
    pub r: Vec<f64>,
    pub features: Vec<Vec<f64>>,
}

impl FeaturedLocations {
    pub fn new(locations: &[Location], wave_numbers: &[u32]) -> Self {
        FeaturedLocations {
            r: locations.iter().map(|l| l.r).collect(),
            features: locations
                .iter()
                .map(|l| fourier_features(l.theta, wave_numbers))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }
}

impl<'a> AnnulusKernel<'a> {
    pub fn new(hyper: &'a Hyperparameters, wave_numbers: &'a [u32]) -> Self {
        AnnulusKernel {
            hyper,
            wave_numbers,
        }
    }

    pub fn eval(&self, x: Location, x2: Location) -> f64 {
        kernel(x, x2, self.hyper, self.wave_numbers)
    }

    #[inline]
    fn eval_featured(
        &self,
        a: &FeaturedLocations,
        i: usize,
        b: &FeaturedLocations,
        j: usize,
    ) -> f64 {
        radial_kernel(
            a.r[i],
            b.r[j],
            self.hyper.radial_signal_variance,
            self.hyper.radial_lengthscale_sq,
        ) * circumferential_from_features(
            &a.features[i],
            &b.features[j],
            &self.hyper.fourier_variances,
        )
    }

    /// Gram matrix `K[i, j] = k(x_i, x_j)`; exactly symmetric.
    pub fn gram(&self, locations: &[Location]) -> DMatrix<f64> {
        let f = FeaturedLocations::new(locations, self.wave_numbers);
        self.gram_featured(&f)
    }

    pub(crate) fn gram_featured(&self, f: &FeaturedLocations) -> DMatrix<f64> {
        let n = f.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = self.eval_featured(f, i, f, j);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance `K[i, j] = k(a_i, b_j)`.
    pub fn cross(&self, a: &[Location], b: &[Location]) -> DMatrix<f64> {
        let fa = FeaturedLocations::new(a, self.wave_numbers);
        let fb = FeaturedLocations::new(b, self.wave_numbers);
        self.cross_featured(&fa, &fb)
    }

    pub(crate) fn cross_featured(
        &self,
        a: &FeaturedLocations,
        b: &FeaturedLocations,
    ) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval_featured(a, i, b, j))
    }

    /// Prior variance `k(x, x)`.
    pub fn prior_variance(&self, x: Location) -> f64 {
        self.eval(x, x)
    }
}
