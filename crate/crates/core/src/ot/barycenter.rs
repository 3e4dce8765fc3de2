use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{AreaAverage, GaussianField, GaussianFieldRecord};
use crate::linalg::{
    clamped_eigen, frobenius, psd_factor, psd_floor, recompose, sqrt_of_outer, symmetrize_in_place,
};

/// Rule used for the barycenter's area-average spread, recorded in outputs.
pub const AREA_AVERAGE_RULE: &str = "sigma = sum_i w_i sigma_i";

/// Update applied between residual checks. Both share the fixed point and
/// are stopped on the residual of the plain map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointScheme {
    /// `S ← S^{-1/2} (Σ_j ϑ_j (S^{1/2} Σ_j S^{1/2})^{1/2})² S^{-1/2}`, run in
    /// coordinates of the joint range of the inputs. Falls back to the plain
    /// map on steps where the iterate is numerically singular there.
    #[default]
    Scaled,
    /// `S ← Σ_j ϑ_j (S^{1/2} Σ_j S^{1/2})^{1/2}`. Converges linearly and
    /// slowly when the covariances are rank deficient.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycenterSettings {
    /// Relative Frobenius tolerance on the fixed-point residual.
    pub tolerance: f64,
    pub max_iters: usize,
    pub scheme: FixedPointScheme,
}

impl Default for BarycenterSettings {
    fn default() -> Self {
        BarycenterSettings {
            tolerance: 1e-9,
            max_iters: 200,
            scheme: FixedPointScheme::Scaled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterResult {
    pub field: GaussianField,
    pub weights: Vec<f64>,
    /// Number of fixed-point map evaluations.
    pub iterations: usize,
    /// `‖Σ − Σ_j ϑ_j (Σ^{1/2} Σ_j Σ^{1/2})^{1/2}‖_F / ‖Σ‖_F` at the returned iterate.
    pub residual: f64,
    /// The same residual at the initial Euclidean mean.
    pub initial_residual: f64,
}

/// Checks that weights are finite, nonnegative and sum to one within `1e-12`.
pub fn validate_weights(weights: &[f64], k: usize) -> Result<()> {
    if weights.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(format!(
            "weights must be finite and nonnegative: {weights:?}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// `Σ_j ϑ_j (S^{1/2} Σ_j S^{1/2})^{1/2}` with `Σ_j = L_j L_jᵀ`, given the
/// root of `S`. Each inner root is taken as `(M Mᵀ)^{1/2}` with
/// `M = S^{1/2} L_j`; going through the eigenvalues of the inner product
/// instead leaves roundoff of order `sqrt(eps)` in rank-deficient directions.
fn fixed_point_map(root: &DMatrix<f64>, factors: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let n = root.nrows();
    let mut next = DMatrix::zeros(n, n);
    for (l, &w) in factors.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        next += sqrt_of_outer(&(root * l)) * w;
    }
    symmetrize_in_place(&mut next);
    next
}

fn relative_residual(current: &DMatrix<f64>, next: &DMatrix<f64>) -> f64 {
    let diff = frobenius(&(current - next));
    let scale = frobenius(current);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Outcome of the fixed-point iteration on raw moments.
#[derive(Debug, Clone)]
pub struct MomentsBarycenter {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub initial_residual: f64,
    pub converged: bool,
}

/// Barycenter of raw Gaussian moments. Non-convergence is reported through
/// `converged`; errors are numerical failures of the square roots.
pub fn barycenter_moments(
    means: &[&DVector<f64>],
    covs: &[&DMatrix<f64>],
    weights: &[f64],
    settings: &BarycenterSettings,
) -> Result<MomentsBarycenter> {
    let n = means[0].len();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for ((m, c), &w) in means.iter().zip(covs).zip(weights) {
        mean += *m * w;
        cov += *c * w;
    }
    symmetrize_in_place(&mut cov);
    let factors = covs
        .iter()
        .zip(weights)
        .map(|(c, &w)| {
            if w == 0.0 {
                Ok(DMatrix::zeros(c.nrows(), 0))
            } else {
                psd_factor(c)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    // Work in an orthonormal basis of the joint range. The barycenter lives
    // there and the iterate can be positive definite in it.
    let basis = joint_range(&factors, n);
    let r = basis.ncols();
    if r == 0 {
        return Ok(MomentsBarycenter {
            mean,
            covariance: DMatrix::zeros(n, n),
            iterations: 1,
            residual: 0.0,
            initial_residual: 0.0,
            converged: true,
        });
    }
    let factors: Vec<DMatrix<f64>> = factors.iter().map(|l| basis.transpose() * l).collect();
    let mut s = basis.transpose() * &cov * &basis;
    symmetrize_in_place(&mut s);

    let lift = |s: &DMatrix<f64>| {
        let mut full = &basis * s * basis.transpose();
        symmetrize_in_place(&mut full);
        full
    };
    let mut initial_residual = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=settings.max_iters {
        let eig = clamped_eigen(&s, psd_floor(&s))?;
        let root = recompose(&eig, f64::sqrt);
        let mapped = fixed_point_map(&root, &factors, weights);
        residual = relative_residual(&s, &mapped);
        if it == 1 {
            initial_residual = residual;
        }
        if residual <= settings.tolerance {
            return Ok(MomentsBarycenter {
                mean,
                covariance: lift(&s),
                iterations: it,
                residual,
                initial_residual,
                converged: true,
            });
        }
        let max = eig.eigenvalues.max();
        let regular = eig.eigenvalues.min() > SCALED_STEP_FLOOR * max;
        s = match settings.scheme {
            FixedPointScheme::Scaled if regular => {
                let inv_root = recompose(&eig, |v| 1.0 / v.sqrt());
                let half = &inv_root * &mapped;
                let mut next = &half * half.transpose();
                symmetrize_in_place(&mut next);
                next
            }
            _ => mapped,
        };
    }
    Ok(MomentsBarycenter {
        mean,
        covariance: lift(&s),
        iterations: settings.max_iters,
        residual,
        initial_residual,
        converged: false,
    })
}

/// Smallest eigenvalue, relative to the largest, at which the scaled step
/// still inverts the iterate's root.
const SCALED_STEP_FLOOR: f64 = 1e-12;

/// Orthonormal basis (n × r) of the span of the columns of all factors.
fn joint_range(factors: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let mut gram = DMatrix::zeros(n, n);
    for l in factors {
        gram += l * l.transpose();
    }
    symmetrize_in_place(&mut gram);
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return DMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > RANGE_TRUNCATION * max)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// Matches the truncation used for the per-field factors.
const RANGE_TRUNCATION: f64 = 1e-11;

/// Wasserstein barycenter of Gaussian fields sharing one grid.
///
/// The mean is the weighted mean. The covariance is iterated from
/// `Σ_j ϑ_j Σ_j` until the relative Frobenius residual of the map
/// `Σ ↦ Σ_j ϑ_j (Σ^{1/2} Σ_j Σ^{1/2})^{1/2}` falls below the tolerance.
pub fn barycenter(
    fields: &[GaussianField],
    weights: &[f64],
    settings: &BarycenterSettings,
) -> Result<BarycenterResult> {
    if fields.is_empty() {
        return Err(Error::InvalidInput(
            "barycenter needs at least one field".into(),
        ));
    }
    validate_weights(weights, fields.len())?;
    for f in &fields[1..] {
        fields[0].check_same_grid(f)?;
    }
    let means: Vec<&DVector<f64>> = fields.iter().map(|f| f.mean()).collect();
    let covs: Vec<&DMatrix<f64>> = fields.iter().map(|f| f.covariance()).collect();
    let area = fields
        .iter()
        .map(|f| f.area_average())
        .collect::<Option<Vec<_>>>()
        .map(|a| barycenter_area_average(&a, weights))
        .transpose()?;
    let locations = fields[0].locations().to_vec();
    let out = barycenter_moments(&means, &covs, weights, settings)?;
    let mut field = GaussianField::from_parts(locations, out.mean, out.covariance);
    field.set_area_average(area);
    if !out.converged {
        return Err(Error::BarycenterNonConvergence {
            iterations: out.iterations,
            residual: out.residual,
            weights: weights.to_vec(),
            last: Box::new(field),
        });
    }
    Ok(BarycenterResult {
        field,
        weights: weights.to_vec(),
        iterations: out.iterations,
        residual: out.residual,
        initial_residual: out.initial_residual,
    })
}

/// 1D Wasserstein barycenter of area averages: mean `Σ ϑ_i μ_i`, standard
/// deviation `Σ ϑ_i σ_i`.
pub fn barycenter_area_average(averages: &[AreaAverage], weights: &[f64]) -> Result<AreaAverage> {
    if averages.is_empty() {
        return Err(Error::InvalidInput("no area averages given".into()));
    }
    validate_weights(weights, averages.len())?;
    let mut mean = 0.0;
    let mut std = 0.0;
    for (a, &w) in averages.iter().zip(weights) {
        if a.variance < 0.0 || !a.variance.is_finite() {
            return Err(Error::NegativeVariance(a.variance));
        }
        mean += w * a.mean;
        std += w * a.variance.sqrt();
    }
    Ok(AreaAverage {
        mean,
        variance: std * std,
    })
}

#[derive(Serialize, Deserialize)]
struct BarycenterRecord {
    #[serde(flatten)]
    field: GaussianFieldRecord,
    weights: Vec<f64>,
    iterations: usize,
    residual: f64,
    #[serde(default)]
    initial_residual: Option<f64>,
    #[serde(default)]
    area_average_rule: Option<String>,
}

impl Serialize for BarycenterResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BarycenterRecord {
            field: GaussianFieldRecord::from(&self.field),
            weights: self.weights.clone(),
            iterations: self.iterations,
            residual: self.residual,
            initial_residual: Some(self.initial_residual),
            area_average_rule: self
                .field
                .area_average()
                .map(|_| AREA_AVERAGE_RULE.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BarycenterResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = BarycenterRecord::deserialize(d)?;
        let field = GaussianField::try_from(rec.field).map_err(serde::de::Error::custom)?;
        Ok(BarycenterResult {
            field,
            weights: rec.weights,
            iterations: rec.iterations,
            residual: rec.residual,
            initial_residual: rec.initial_residual.unwrap_or(f64::NAN),
        })
    }
}
